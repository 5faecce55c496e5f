use thiserror::Error;

/// Errors raised by the moment machinery, the solvers and the scenario loaders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("velocity dimension must be 1, 2 or 3 (got {0})")]
    InvalidDimension(usize),

    #[error("multi-index of order {order} exceeds the layout's maximum order {max}")]
    OrderTooHigh { order: usize, max: usize },

    #[error("ordinal {ordinal} out of range for a layout with {count} entries")]
    OrdinalOutOfRange { ordinal: usize, count: usize },

    #[error("multi-index has dimension {got}, layout expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("temperature must be positive (got {0})")]
    NonPositiveTemperature(f64),

    #[error("density must be positive (got {0})")]
    NonPositiveDensity(f64),

    #[error("non-positive internal energy: unphysical state (rho = {rho}, e_int = {internal})")]
    NonPositiveInternalEnergy { rho: f64, internal: f64 },

    #[error("solver breakdown in cell {cell} at t = {time}: {reason}")]
    Breakdown { cell: usize, time: f64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
