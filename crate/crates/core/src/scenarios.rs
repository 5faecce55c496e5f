//! Problem setups: the Riemann shock tube, the stationary shock structure, a
//! smooth periodic wave, relaxation-time models and the key-value config
//! format used to describe runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closure::ClosureKind;
use crate::error::{Error, Result};
use crate::fv::Reconstruction;
use crate::maxwell_iter::Profile;
use crate::moments::MacroState;
use crate::scalar::Real;

/// Default VHS viscosity exponent.
pub const DEFAULT_OMEGA: f64 = 0.72;
/// Default CFL number.
pub const DEFAULT_CFL: f64 = 0.95;

/// Relaxation time model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauModel {
    /// `τ = Kn/ρ`.
    KnOverRho,
    /// Variable hard spheres: `τ = √(π/2) 15 Kn / ((5-2ω)(7-2ω)) θ^{ω-1}/ρ`.
    Vhs { omega: f64 },
}

impl TauModel {
    pub fn tau<T: Real>(&self, kn: T, rho: T, theta: T) -> T {
        match *self {
            TauModel::KnOverRho => kn / rho,
            TauModel::Vhs { omega } => {
                let pref = (std::f64::consts::PI / 2.0).sqrt() * 15.0 / ((5.0 - 2.0 * omega) * (7.0 - 2.0 * omega));
                T::lit(pref) * kn * theta.powf(T::lit(omega - 1.0)) / rho
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            TauModel::KnOverRho => "kn-over-rho",
            TauModel::Vhs { .. } => "vhs",
        }
    }

    pub fn parse(tag: &str, omega: f64) -> Result<Self> {
        match tag {
            "kn-over-rho" => Ok(TauModel::KnOverRho),
            "vhs" => Ok(TauModel::Vhs { omega }),
            other => Err(Error::InvalidConfig(format!("unknown tau model '{other}' (expected kn-over-rho or vhs)"))),
        }
    }
}

/// When a run ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopCriterion {
    Time(f64),
    /// Stop once the L1 change of density over one check interval, divided by
    /// the interval length, drops below `tolerance`, or at `max_time`.
    Steady {
        tolerance: f64,
        check_interval: f64,
        max_time: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Ghost cells hold the initial far-field equilibria.
    FarField,
    Periodic,
}

/// A piecewise-constant equilibrium state given by `(ρ, u_1, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveState {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

impl PrimitiveState {
    pub fn theta(&self) -> f64 {
        self.p / self.rho
    }

    pub fn to_macro<T: Real>(&self, dim: usize) -> Result<MacroState<T>> {
        MacroState::one_d(T::lit(self.rho), T::lit(self.u), T::lit(self.theta()), dim)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Riemann { x0: f64, left: PrimitiveState, right: PrimitiveState },
    Smooth { rho: Profile<f64>, u: Profile<f64>, theta: Profile<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub initial: InitialData,
    pub boundary: BoundaryKind,
    pub stop: StopCriterion,
    pub kn: f64,
    pub tau_model: TauModel,
    /// Default number of cells.
    pub cells: usize,
    /// Far-field densities used to normalise profiles to `[0, 1]`.
    pub normalization: Option<(f64, f64)>,
}

impl Scenario {
    /// Equilibrium state at position `x` at `t = 0`.
    pub fn initial_state<T: Real>(&self, x: f64) -> Result<MacroState<T>> {
        match &self.initial {
            InitialData::Riemann { x0, left, right } => (if x < *x0 { left } else { right }).to_macro(self.dim),
            InitialData::Smooth { rho, u, theta } => MacroState::one_d(T::lit(rho.eval(x)), T::lit(u.eval(x)), T::lit(theta.eval(x)), self.dim),
        }
    }

    pub fn far_field(&self) -> Option<(PrimitiveState, PrimitiveState)> {
        match &self.initial {
            InitialData::Riemann { left, right, .. } => Some((*left, *right)),
            InitialData::Smooth { .. } => None,
        }
    }
}

/// Sod-type tube with a 7:1 density and pressure ratio on `[-1, 1.5]`.
pub fn shock_tube(kn: f64) -> Scenario {
    Scenario {
        name: "shock-tube".into(),
        dim: 3,
        x_lo: -1.0,
        x_hi: 1.5,
        initial: InitialData::Riemann {
            x0: 0.0,
            left: PrimitiveState { rho: 7.0, u: 0.0, p: 7.0 },
            right: PrimitiveState { rho: 1.0, u: 0.0, p: 1.0 },
        },
        boundary: BoundaryKind::FarField,
        stop: StopCriterion::Time(0.3),
        kn,
        tau_model: TauModel::KnOverRho,
        cells: 200,
        normalization: None,
    }
}

/// Upstream and downstream Rankine–Hugoniot states of a stationary shock
/// with Mach number `mach` (monatomic gas, `γ = 5/3`).
pub fn rankine_hugoniot(mach: f64) -> Result<(PrimitiveState, PrimitiveState)> {
    if !(mach > 1.0) || !mach.is_finite() {
        return Err(Error::InvalidConfig(format!("shock Mach number must exceed 1 (got {mach})")));
    }
    let m2 = mach * mach;
    let c = (5.0f64 / 3.0).sqrt();
    let left = PrimitiveState { rho: 1.0, u: c * mach, p: 1.0 };
    let right = PrimitiveState { rho: 4.0 * m2 / (m2 + 3.0), u: c * (m2 + 3.0) / (4.0 * mach), p: (5.0 * m2 - 1.0) / 4.0 };
    Ok((left, right))
}

/// Stationary shock wave on `[-30, 30]` with `Δx = 0.1`, `Kn = 1` and the VHS
/// relaxation time.
pub fn shock_structure(mach: f64) -> Result<Scenario> {
    let (left, right) = rankine_hugoniot(mach)?;
    Ok(Scenario {
        name: "shock-structure".into(),
        dim: 3,
        x_lo: -30.0,
        x_hi: 30.0,
        initial: InitialData::Riemann { x0: 0.0, left, right },
        boundary: BoundaryKind::FarField,
        stop: StopCriterion::Steady { tolerance: 1e-8, check_interval: 1.0, max_time: 400.0 },
        kn: 1.0,
        tau_model: TauModel::Vhs { omega: DEFAULT_OMEGA },
        cells: 600,
        normalization: Some((left.rho, right.rho)),
    })
}

/// Smooth periodic wave on `[0, 2π)`.
pub fn periodic_wave(kn: f64) -> Scenario {
    Scenario {
        name: "periodic-wave".into(),
        dim: 3,
        x_lo: 0.0,
        x_hi: std::f64::consts::TAU,
        initial: InitialData::Smooth {
            rho: Profile::Trig { mean: 1.0, modes: vec![(1, 0.0, 0.2)] },
            u: Profile::Trig { mean: 0.0, modes: vec![(1, 0.1, 0.0)] },
            theta: Profile::Trig { mean: 1.0, modes: vec![(1, 0.15, 0.1)] },
        },
        boundary: BoundaryKind::Periodic,
        stop: StopCriterion::Time(0.5),
        kn,
        tau_model: TauModel::KnOverRho,
        cells: 1000,
        normalization: None,
    }
}

/// `(ρ - ρ_up)/(ρ_down - ρ_up)`.
pub fn normalize_density(profile: &[f64], upstream: f64, downstream: f64) -> Result<Vec<f64>> {
    let span = downstream - upstream;
    if span == 0.0 {
        return Err(Error::InvalidConfig("normalisation needs distinct far-field densities".into()));
    }
    Ok(profile.iter().map(|&r| (r - upstream) / span).collect())
}

/// Run description as read from a key-value config file or assembled from
/// command-line flags. Every field is optional; missing values fall back to
/// the scenario defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<String>,
    #[serde(rename = "M", alias = "m")]
    pub max_order: Option<usize>,
    #[serde(rename = "D", alias = "d")]
    pub dim: Option<usize>,
    #[serde(alias = "Kn")]
    pub kn: Option<f64>,
    pub mach: Option<f64>,
    pub cells: Option<usize>,
    pub cfl: Option<f64>,
    pub closure: Option<ClosureKind>,
    pub reconstruction: Option<Reconstruction>,
    pub tau: Option<String>,
    pub omega: Option<f64>,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub t_end: Option<f64>,
    pub steady_tolerance: Option<f64>,
    pub max_time: Option<f64>,
    pub left_rho: Option<f64>,
    pub left_u: Option<f64>,
    pub left_p: Option<f64>,
    pub right_rho: Option<f64>,
    pub right_u: Option<f64>,
    pub right_p: Option<f64>,
}

/// Fully resolved numerical settings of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub scenario: Scenario,
    pub max_order: usize,
    pub cells: usize,
    pub cfl: f64,
    pub closure: ClosureKind,
    pub reconstruction: Reconstruction,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Values present in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(
            self,
            top,
            scenario,
            max_order,
            dim,
            kn,
            mach,
            cells,
            cfl,
            closure,
            reconstruction,
            tau,
            omega,
            x_lo,
            x_hi,
            t_end,
            steady_tolerance,
            max_time,
            left_rho,
            left_u,
            left_p,
            right_rho,
            right_u,
            right_p
        );
        self
    }

    pub fn resolve(&self) -> Result<RunSettings> {
        let name = self.scenario.as_deref().unwrap_or("shock-tube");
        let mut sc = match name {
            "shock-tube" => shock_tube(self.kn.unwrap_or(0.02)),
            "shock-structure" => shock_structure(self.mach.unwrap_or(2.05))?,
            "periodic-wave" => periodic_wave(self.kn.unwrap_or(0.01)),
            other => return Err(Error::InvalidConfig(format!("unknown scenario '{other}'"))),
        };
        if let Some(kn) = self.kn {
            if !(kn > 0.0) {
                return Err(Error::InvalidConfig(format!("Kn must be positive (got {kn})")));
            }
            sc.kn = kn;
        }
        if self.mach.is_some() && name != "shock-structure" {
            return Err(Error::InvalidConfig("--mach only applies to the shock-structure scenario".into()));
        }
        if let Some(d) = self.dim {
            if !(1..=3).contains(&d) {
                return Err(Error::InvalidDimension(d));
            }
            sc.dim = d;
        }
        let omega = self.omega.unwrap_or(match sc.tau_model {
            TauModel::Vhs { omega } => omega,
            TauModel::KnOverRho => DEFAULT_OMEGA,
        });
        if let Some(tag) = &self.tau {
            sc.tau_model = TauModel::parse(tag, omega)?;
        } else if let TauModel::Vhs { .. } = sc.tau_model {
            sc.tau_model = TauModel::Vhs { omega };
        }
        if let TauModel::Vhs { omega } = sc.tau_model {
            if !(omega > 0.0 && omega < 2.5) {
                return Err(Error::InvalidConfig(format!("omega must lie in (0, 2.5) (got {omega})")));
            }
        }
        if let Some(x) = self.x_lo {
            sc.x_lo = x;
        }
        if let Some(x) = self.x_hi {
            sc.x_hi = x;
        }
        if !(sc.x_hi > sc.x_lo) {
            return Err(Error::InvalidConfig("domain must satisfy x_lo < x_hi".into()));
        }
        if let InitialData::Riemann { left, right, .. } = &mut sc.initial {
            let apply = |s: &mut PrimitiveState, r: Option<f64>, u: Option<f64>, p: Option<f64>| {
                if let Some(v) = r {
                    s.rho = v;
                }
                if let Some(v) = u {
                    s.u = v;
                }
                if let Some(v) = p {
                    s.p = v;
                }
            };
            apply(left, self.left_rho, self.left_u, self.left_p);
            apply(right, self.right_rho, self.right_u, self.right_p);
            for s in [&*left, &*right] {
                if !(s.rho > 0.0 && s.p > 0.0) {
                    return Err(Error::InvalidConfig("far-field density and pressure must be positive".into()));
                }
            }
            if sc.normalization.is_some() {
                sc.normalization = Some((left.rho, right.rho));
            }
        }
        match &mut sc.stop {
            StopCriterion::Time(t) => {
                if let Some(te) = self.t_end {
                    *t = te;
                }
            }
            StopCriterion::Steady { tolerance, max_time, .. } => {
                if let Some(v) = self.steady_tolerance {
                    *tolerance = v;
                }
                if let Some(v) = self.max_time.or(self.t_end) {
                    *max_time = v;
                }
            }
        }
        let cells = self.cells.unwrap_or(sc.cells);
        if cells < 4 {
            return Err(Error::InvalidConfig(format!("need at least 4 cells (got {cells})")));
        }
        sc.cells = cells;
        let max_order = self.max_order.unwrap_or(3);
        if max_order < 3 {
            return Err(Error::InvalidConfig(format!("moment order M must be at least 3 (got {max_order})")));
        }
        let cfl = self.cfl.unwrap_or(DEFAULT_CFL);
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(Error::InvalidConfig(format!("CFL number must lie in (0, 1] (got {cfl})")));
        }
        Ok(RunSettings {
            scenario: sc,
            max_order,
            cells,
            cfl,
            closure: self.closure.unwrap_or_default(),
            reconstruction: self.reconstruction.unwrap_or_default(),
        })
    }
}
