//! Closures for the coefficients of order `M + 1`.
//!
//! Both regularizations express `f_α`, `|α| = M + 1`, through the retained
//! coefficients and their spatial gradients:
//!
//! * nonlinear:
//!   `f_α = τ[(1/ρ) Σ_j ∂_j p f_{α-e_j} - θ Σ_j ∂_j f_{α-e_j}]
//!        + (1/ρ) Σ_j Σ_d [½ σ_{dj} f_{α-e_d-e_j}
//!        + q_j (θ f_{α-2e_d-e_j} + (α_j+1) f_{α-2e_d+e_j}) / ((D+2)θ)]`
//! * linear: `f_α = -τθ Σ_j ∂_j f_{α-e_j}`.
//!
//! The stress in the double sum is read as `σ_{dj}`; it is the only choice of
//! the free index that makes the sum well formed. Indices with a negative
//! component contribute zero.

use crate::error::{Error, Result};
use crate::moments::{stress_heat, MacroState, MomentCoeffs};
use crate::multi_index::{MomentLayout, MultiIndex, MAX_DIM};
use crate::scalar::Real;

/// Closure variant used for the top-order coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureKind {
    #[default]
    Linear,
    Nonlinear,
}

impl std::str::FromStr for ClosureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "nonlinear" => Ok(Self::Nonlinear),
            other => Err(Error::InvalidConfig(format!("unknown closure '{other}' (expected linear or nonlinear)"))),
        }
    }
}

impl std::fmt::Display for ClosureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Nonlinear => "nonlinear",
        })
    }
}

/// Spatial derivatives along one spatial axis `x_j` of the frame and of all
/// retained coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientData<T> {
    pub drho: T,
    pub du: [T; MAX_DIM],
    pub dtheta: T,
    /// `∂f_α/∂x_j` in layout order.
    pub dcoeffs: Vec<T>,
}

impl<T: Real> GradientData<T> {
    pub fn zeros(layout: &MomentLayout) -> Self {
        Self { drho: T::zero(), du: [T::zero(); MAX_DIM], dtheta: T::zero(), dcoeffs: vec![T::zero(); layout.len()] }
    }

    /// `∂p/∂x_j = θ ∂ρ/∂x_j + ρ ∂θ/∂x_j`.
    pub fn dpressure(&self, state: &MacroState<T>) -> T {
        state.theta() * self.drho + state.rho() * self.dtheta
    }
}

fn check_top(alpha: &MultiIndex, layout: &MomentLayout) -> Result<()> {
    if alpha.dim() != layout.dim() {
        return Err(Error::DimensionMismatch { expected: layout.dim(), got: alpha.dim() });
    }
    if alpha.order() != layout.max_order() + 1 {
        return Err(Error::InvalidConfig(format!("closure needs an index of order {} (got {alpha})", layout.max_order() + 1)));
    }
    Ok(())
}

#[inline]
fn lookup<T: Real>(values: &[T], alpha: &MultiIndex, shifts: &[(usize, i32)], layout: &MomentLayout) -> T {
    alpha.offset(shifts).and_then(|b| layout.find(&b)).map_or(T::zero(), |k| values[k])
}

/// Nonlinear regularization for one index of order `M + 1`. `grads[j]` holds
/// the derivatives along `x_j`; missing spatial axes have zero derivatives.
pub fn closure_nonlinear<T: Real>(
    alpha: &MultiIndex,
    state: &MacroState<T>,
    coeffs: &MomentCoeffs<T>,
    grads: &[GradientData<T>],
    tau: T,
    layout: &MomentLayout,
) -> Result<T> {
    check_top(alpha, layout)?;
    let theta = state.theta();
    let f = coeffs.as_slice();
    let mut gradient_part = T::zero();
    for (j, g) in grads.iter().enumerate().take(layout.dim()) {
        gradient_part += g.dpressure(state) / state.rho() * lookup(f, alpha, &[(j, -1)], layout);
        gradient_part -= theta * lookup(&g.dcoeffs, alpha, &[(j, -1)], layout);
    }
    Ok(tau * gradient_part + nonlinear_source(alpha, state, coeffs, layout)?)
}

/// Gradient-free part of [`closure_nonlinear`]: the products of stress and
/// heat flux with lower coefficients.
pub fn nonlinear_source<T: Real>(alpha: &MultiIndex, state: &MacroState<T>, coeffs: &MomentCoeffs<T>, layout: &MomentLayout) -> Result<T> {
    check_top(alpha, layout)?;
    let dim = layout.dim();
    let theta = state.theta();
    let f = coeffs.as_slice();
    let sh = stress_heat(coeffs, state, layout);
    let half = T::lit(0.5);
    let denom = T::from_count(dim + 2) * theta;
    let mut source = T::zero();
    for j in 0..dim {
        let aj1 = T::from_count(alpha.get(j) + 1);
        for d in 0..dim {
            source += half * sh.sigma[d][j] * lookup(f, alpha, &[(d, -1), (j, -1)], layout);
            source += sh.q[j] * (theta * lookup(f, alpha, &[(d, -2), (j, -1)], layout) + aj1 * lookup(f, alpha, &[(d, -2), (j, 1)], layout)) / denom;
        }
    }
    Ok(source / state.rho())
}

/// Linearized regularization `-τθ Σ_j ∂_j f_{α-e_j}` for one index of order `M + 1`.
pub fn closure_linear<T: Real>(alpha: &MultiIndex, theta: T, tau: T, grads: &[GradientData<T>], layout: &MomentLayout) -> Result<T> {
    check_top(alpha, layout)?;
    let mut s = T::zero();
    for (j, g) in grads.iter().enumerate().take(layout.dim()) {
        s += lookup(&g.dcoeffs, alpha, &[(j, -1)], layout);
    }
    Ok(-tau * theta * s)
}

/// Leading-order stress and heat flux: Fourier's law
/// `q_k = -((D+2)/2) τρθ ∂_k θ` and the Navier–Stokes law
/// `σ_ij = -2τρθ ∂_⟨i u_j⟩` with the trace-free symmetric gradient.
pub fn nsf_limits<T: Real>(state: &MacroState<T>, grads: &[GradientData<T>], tau: T) -> ([[T; MAX_DIM]; MAX_DIM], [T; MAX_DIM]) {
    let dim = state.dim();
    let mut grad_u = [[T::zero(); MAX_DIM]; MAX_DIM];
    let mut grad_theta = [T::zero(); MAX_DIM];
    for (j, g) in grads.iter().enumerate().take(dim) {
        for i in 0..dim {
            grad_u[i][j] = g.du[i];
        }
        grad_theta[j] = g.dtheta;
    }
    let div: T = (0..dim).map(|i| grad_u[i][i]).sum();
    let mu = tau * state.pressure();
    let two = T::lit(2.0);
    let mut sigma = [[T::zero(); MAX_DIM]; MAX_DIM];
    let mut q = [T::zero(); MAX_DIM];
    for i in 0..dim {
        for j in 0..dim {
            let mut s = grad_u[i][j] + grad_u[j][i];
            if i == j {
                s -= two * div / T::from_count(dim);
            }
            sigma[i][j] = -mu * s;
        }
        q[i] = -T::from_count(dim + 2) / two * mu * grad_theta[i];
    }
    (sigma, q)
}

/// Viscosity and heat conductivity implied by [`nsf_limits`] with `R = 1`.
pub fn transport_coefficients<T: Real>(state: &MacroState<T>, tau: T) -> (T, T) {
    let mu = tau * state.pressure();
    let kappa = T::from_count(state.dim() + 2) / T::lit(2.0) * mu;
    (mu, kappa)
}
