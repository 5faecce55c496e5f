//! Regularized arbitrary-order Hermite moment method for the Boltzmann-BGK
//! equation in one spatial dimension.

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod closure;
pub mod dvm;
pub mod error;
pub mod fv;
pub mod hermite;
pub mod io;
pub mod maxwell_iter;
pub mod moments;
pub mod multi_index;
pub mod scalar;
pub mod scenarios;

pub use error::{Error, Result};
pub use multi_index::{MomentLayout, MultiIndex};
pub use scalar::Real;

/// Double-precision aliases of the generic types.
pub type MacroStateF64 = moments::MacroState<f64>;
pub type MomentCoeffsF64 = moments::MomentCoeffs<f64>;
pub type SolverF64 = fv::Solver<f64>;
pub type SimStateF64 = fv::SimState<f64>;
