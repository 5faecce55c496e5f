//! Local expansion state: the frame `(ρ, u, θ)`, the Hermite coefficients
//! `f_α`, macroscopic extraction, Maxwellian initialisation, reconstruction of
//! the distribution and projection between frames.
//!
//! In the frame `(u, θ)` the distribution is
//! `f(ξ) = Σ_α f_α H_{θ,α}((ξ - u)/√θ)`. Two identities drive everything here:
//! `∂_{u_d} H_{θ,α} = H_{θ,α+e_d}` and `∂_θ H_{θ,α} = ½ Σ_d H_{θ,α+2e_d}`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::hermite::basis_weight;
use crate::multi_index::{MomentLayout, MAX_DIM};
use crate::scalar::Real;

/// Frame parameters of a Hermite expansion. `ρ > 0` and `θ > 0` are enforced
/// on construction; velocity components beyond the dimension are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroState<T> {
    rho: T,
    u: [T; MAX_DIM],
    theta: T,
    dim: usize,
}

impl<T: Real> MacroState<T> {
    pub fn new(rho: T, u: &[T], theta: T) -> Result<Self> {
        if u.is_empty() || u.len() > MAX_DIM {
            return Err(Error::InvalidDimension(u.len()));
        }
        if !(rho > T::zero()) {
            return Err(Error::NonPositiveDensity(rho.to_f64_lossy()));
        }
        if !(theta > T::zero()) {
            return Err(Error::NonPositiveTemperature(theta.to_f64_lossy()));
        }
        let mut uu = [T::zero(); MAX_DIM];
        uu[..u.len()].copy_from_slice(u);
        Ok(Self { rho, u: uu, theta, dim: u.len() })
    }

    /// Flow along the first axis only, the situation of every 1D problem.
    pub fn one_d(rho: T, u1: T, theta: T, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidDimension(dim));
        }
        let mut u = [T::zero(); MAX_DIM];
        u[0] = u1;
        Self::new(rho, &u[..dim], theta)
    }

    #[inline]
    pub fn rho(&self) -> T {
        self.rho
    }

    #[inline]
    pub fn u(&self) -> &[T] {
        &self.u[..self.dim]
    }

    #[inline]
    pub fn u1(&self) -> T {
        self.u[0]
    }

    #[inline]
    pub fn theta(&self) -> T {
        self.theta
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `p = ρθ`.
    #[inline]
    pub fn pressure(&self) -> T {
        self.rho * self.theta
    }
}

/// Coefficients `f_α` in the storage order of a [`MomentLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct MomentCoeffs<T>(Vec<T>);

impl<T: Real> MomentCoeffs<T> {
    pub fn zeros(layout: &MomentLayout) -> Self {
        Self(vec![T::zero(); layout.len()])
    }

    pub fn from_vec(layout: &MomentLayout, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), got: values.len() });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T> Index<usize> for MomentCoeffs<T> {
    type Output = T;
    fn index(&self, k: usize) -> &T {
        &self.0[k]
    }
}

impl<T> IndexMut<usize> for MomentCoeffs<T> {
    fn index_mut(&mut self, k: usize) -> &mut T {
        &mut self.0[k]
    }
}

/// Pressure tensor, stress tensor and heat flux of an expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressHeat<T> {
    pub p: T,
    pub pressure_tensor: [[T; MAX_DIM]; MAX_DIM],
    pub sigma: [[T; MAX_DIM]; MAX_DIM],
    pub q: [T; MAX_DIM],
}

/// Density, momentum density and total energy density `½∫|ξ|²f dξ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conserved<T> {
    pub rho: T,
    pub momentum: [T; MAX_DIM],
    pub energy: T,
}

/// Coefficients of the local Maxwellian in its own frame: `f_0 = ρ`, rest zero.
pub fn maxwellian_coeffs<T: Real>(state: &MacroState<T>, layout: &MomentLayout) -> MomentCoeffs<T> {
    let mut c = MomentCoeffs::zeros(layout);
    c[0] = state.rho();
    c
}

/// Stress and heat flux read off the second and third order coefficients,
/// assuming the compatibility constraints hold.
pub fn stress_heat<T: Real>(coeffs: &MomentCoeffs<T>, state: &MacroState<T>, layout: &MomentLayout) -> StressHeat<T> {
    let dim = layout.dim();
    let two = T::lit(2.0);
    let f = |shifts: &[(usize, i32)]| layout.shifted(0, shifts).map_or(T::zero(), |k| coeffs[k]);
    let mut sigma = [[T::zero(); MAX_DIM]; MAX_DIM];
    let mut q = [T::zero(); MAX_DIM];
    for i in 0..dim {
        for j in 0..dim {
            sigma[i][j] = if i == j { two * f(&[(i, 2)]) } else { f(&[(i, 1), (j, 1)]) };
        }
    }
    for k in 0..dim {
        let mut s = two * f(&[(k, 3)]);
        for d in 0..dim {
            s += f(&[(d, 2), (k, 1)]);
        }
        q[k] = s;
    }
    let p = state.pressure();
    let mut pressure_tensor = sigma;
    for (i, row) in pressure_tensor.iter_mut().enumerate().take(dim) {
        row[i] += p;
    }
    StressHeat { p, pressure_tensor, sigma, q }
}

/// Mass, momentum and energy of an arbitrary coefficient vector in the frame
/// `(u, θ)`; valid whether or not the constraints hold.
pub fn conserved<T: Real>(coeffs: &[T], u: &[T], theta: T, layout: &MomentLayout) -> Conserved<T> {
    let dim = layout.dim();
    let half = T::lit(0.5);
    let rho = coeffs[0];
    let mut momentum = [T::zero(); MAX_DIM];
    let mut energy = T::from_count(dim) * half * rho * theta;
    for d in 0..dim {
        let fe = coeffs[layout.unit(d)];
        let f2e = layout.pure(d, 2).map_or(T::zero(), |k| coeffs[k]);
        momentum[d] = rho * u[d] + fe;
        energy += half * rho * u[d] * u[d] + u[d] * fe + f2e;
    }
    Conserved { rho, momentum, energy }
}

/// Frame of given conserved quantities: `u = m/ρ`, `θ = (2E - |m|²/ρ)/(Dρ)`.
pub fn macro_from_conserved<T: Real>(rho: T, momentum: &[T], energy: T) -> Result<MacroState<T>> {
    let dim = momentum.len();
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidDimension(dim));
    }
    if !(rho > T::zero()) {
        return Err(Error::NonPositiveDensity(rho.to_f64_lossy()));
    }
    let m2: T = momentum.iter().map(|&m| m * m).sum();
    let internal = energy - m2 / (T::lit(2.0) * rho);
    if !(internal > T::zero()) {
        return Err(Error::NonPositiveInternalEnergy { rho: rho.to_f64_lossy(), internal: internal.to_f64_lossy() });
    }
    let u: Vec<T> = momentum.iter().map(|&m| m / rho).collect();
    let theta = T::lit(2.0) * internal / (T::from_count(dim) * rho);
    MacroState::new(rho, &u, theta)
}

/// Inverse of [`macro_from_conserved`] for an equilibrium state.
pub fn conserved_from_macro<T: Real>(state: &MacroState<T>) -> Conserved<T> {
    let mut momentum = [T::zero(); MAX_DIM];
    let mut u2 = T::zero();
    for (d, &u) in state.u().iter().enumerate() {
        momentum[d] = state.rho() * u;
        u2 += u * u;
    }
    let energy = T::lit(0.5) * state.rho() * u2 + T::from_count(state.dim()) * T::lit(0.5) * state.pressure();
    Conserved { rho: state.rho(), momentum, energy }
}

/// Pointwise value of the expansion at the velocity `ξ`.
pub fn reconstruct<T: Real>(coeffs: &MomentCoeffs<T>, state: &MacroState<T>, layout: &MomentLayout, xi: &[T]) -> Result<T> {
    if xi.len() != layout.dim() {
        return Err(Error::DimensionMismatch { expected: layout.dim(), got: xi.len() });
    }
    let sq = state.theta().sqrt();
    let v: Vec<T> = xi.iter().zip(state.u()).map(|(&x, &u)| (x - u) / sq).collect();
    let mut acc = T::zero();
    for (k, a) in layout.indices().iter().enumerate() {
        if coeffs[k] != T::zero() {
            acc += coeffs[k] * basis_weight(state.theta(), a, &v)?;
        }
    }
    Ok(acc)
}

/// Ratio `θ'/θ` below which a projection is flagged as ill-conditioned.
pub const DEGENERATE_THETA_RATIO: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProjectionWarning {
    /// The target temperature is much smaller than the source temperature, so
    /// the discarded coefficients may be large.
    Degenerate { theta_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection<T> {
    pub coeffs: MomentCoeffs<T>,
    pub warning: Option<ProjectionWarning>,
}

/// Re-expands `coeffs` from the frame `from` into the frame `to`.
///
/// Moving the frame along the straight path `s ↦ (u + s δu', θ + s δθ')`
/// turns the coefficients into the solution of the linear constant-coefficient
/// system `df_α/ds = -Σ_d δu'_d f_{α-e_d} - ½ δθ' Σ_d f_{α-2e_d}`. Its flow at
/// `s = 1` factors into one discrete convolution per axis, with kernel the
/// Taylor coefficients of `exp(a t + b t²/2)`, `a = u_d - u'_d`, `b = θ - θ'`.
/// Because the system only couples to lower orders, truncating at `|α| ≤ M`
/// loses nothing and the result is exact for all retained coefficients.
pub fn project_frame<T: Real>(coeffs: &MomentCoeffs<T>, from: &MacroState<T>, to: &MacroState<T>, layout: &MomentLayout) -> Result<Projection<T>> {
    if !(to.theta() > T::zero()) {
        return Err(Error::NonPositiveTemperature(to.theta().to_f64_lossy()));
    }
    let mut out = coeffs.clone();
    let du: Vec<T> = from.u().iter().zip(to.u()).map(|(&a, &b)| a - b).collect();
    let mut scratch = Vec::new();
    project_in_place(out.as_mut_slice(), layout, &du, from.theta() - to.theta(), &mut scratch);
    let ratio = (to.theta() / from.theta()).to_f64_lossy();
    let warning = (ratio < DEGENERATE_THETA_RATIO).then_some(ProjectionWarning::Degenerate { theta_ratio: ratio });
    Ok(Projection { coeffs: out, warning })
}

/// In-place frame change by `δu = u_from - u_to`, `δθ = θ_from - θ_to`.
/// `scratch` is reused between calls to avoid allocation.
pub fn project_in_place<T: Real>(values: &mut [T], layout: &MomentLayout, du: &[T], dtheta: T, scratch: &mut Vec<T>) {
    let m = layout.max_order();
    for axis in 0..layout.dim() {
        let a = du.get(axis).copied().unwrap_or_else(T::zero);
        if a == T::zero() && dtheta == T::zero() {
            continue;
        }
        kernel(a, dtheta, m, scratch);
        // descending ordinal order only reads indices that are not yet updated
        for k in (0..layout.len()).rev() {
            let mut acc = values[k];
            let mut cur = k;
            for &c in scratch.iter().skip(1) {
                match layout.down(cur, axis) {
                    Some(next) => {
                        cur = next;
                        acc += c * values[cur];
                    }
                    None => break,
                }
            }
            values[k] = acc;
        }
    }
}

// Taylor coefficients c_0..=c_m of exp(a t + b t²/2).
fn kernel<T: Real>(a: T, b: T, m: usize, out: &mut Vec<T>) {
    out.clear();
    out.push(T::one());
    if m >= 1 {
        out.push(a);
    }
    for n in 1..m {
        let next = (a * out[n] + b * out[n - 1]) / T::from_count(n + 1);
        out.push(next);
    }
}

/// The same frame change computed by integrating the coefficient ODE with
/// `steps` classical Runge–Kutta steps. Kept as an independent check of
/// [`project_frame`]; for `M ≤ 4` it is exact up to rounding.
pub fn project_frame_ode<T: Real>(
    coeffs: &MomentCoeffs<T>,
    from: &MacroState<T>,
    to: &MacroState<T>,
    layout: &MomentLayout,
    steps: usize,
) -> Result<MomentCoeffs<T>> {
    if !(to.theta() > T::zero()) {
        return Err(Error::NonPositiveTemperature(to.theta().to_f64_lossy()));
    }
    let du: Vec<T> = from.u().iter().zip(to.u()).map(|(&a, &b)| a - b).collect();
    let dth = from.theta() - to.theta();
    let half = T::lit(0.5);
    let rhs = |f: &[T], out: &mut [T]| {
        for k in 0..layout.len() {
            let mut s = T::zero();
            for (d, &a) in du.iter().enumerate() {
                if let Some(j) = layout.down(k, d) {
                    s += a * f[j];
                    if let Some(j2) = layout.down(j, d) {
                        s += half * dth * f[j2];
                    }
                }
            }
            out[k] = s;
        }
    };
    let n = layout.len();
    let h = T::one() / T::from_count(steps.max(1));
    let mut y = coeffs.as_slice().to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    for _ in 0..steps.max(1) {
        rhs(&y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + half * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + half * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            y[i] += h / T::lit(6.0) * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
    }
    MomentCoeffs::from_vec(layout, y)
}

/// Moves an arbitrary coefficient vector into the frame defined by its own
/// conserved quantities and enforces the constraints there.
pub fn to_own_frame<T: Real>(coeffs: &MomentCoeffs<T>, frame: &MacroState<T>, layout: &MomentLayout) -> Result<(MacroState<T>, MomentCoeffs<T>)> {
    let c = conserved(coeffs.as_slice(), frame.u(), frame.theta(), layout);
    let target = macro_from_conserved(c.rho, &c.momentum[..layout.dim()], c.energy)?;
    let mut out = project_frame(coeffs, frame, &target, layout)?.coeffs;
    enforce_constraints(out.as_mut_slice(), target.rho(), layout);
    Ok((target, out))
}

/// Sets `f_0 = ρ`, `f_{e_i} = 0` and removes the trace of the second order block.
pub fn enforce_constraints<T: Real>(values: &mut [T], rho: T, layout: &MomentLayout) {
    let dim = layout.dim();
    values[0] = rho;
    for d in 0..dim {
        values[layout.unit(d)] = T::zero();
    }
    if layout.max_order() >= 2 {
        let diag: Vec<usize> = (0..dim).filter_map(|d| layout.pure(d, 2)).collect();
        let mean = diag.iter().map(|&k| values[k]).sum::<T>() / T::from_count(dim);
        for k in diag {
            values[k] -= mean;
        }
    }
}

/// Largest violation of the compatibility constraints, scaled by `ρθ^{|α|/2}`.
pub fn constraint_residual<T: Real>(coeffs: &MomentCoeffs<T>, state: &MacroState<T>, layout: &MomentLayout) -> T {
    let rho = state.rho();
    let sq = state.theta().sqrt();
    let mut worst = ((coeffs[0] - rho) / rho).abs();
    for d in 0..layout.dim() {
        worst = worst.max((coeffs[layout.unit(d)] / (rho * sq)).abs());
    }
    if layout.max_order() >= 2 {
        let tr: T = (0..layout.dim()).filter_map(|d| layout.pure(d, 2)).map(|k| coeffs[k]).sum();
        worst = worst.max((tr / (rho * state.theta())).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::QuadratureRule;
    use crate::multi_index::MultiIndex;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn inv_phi(v: &[f64]) -> f64 {
        v.iter().map(|&x| (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp()).product()
    }

    // ∫ g(ξ) f(ξ) dξ by Gauss–Hermite in the frame of `state`.
    fn integrate(rule: &QuadratureRule<f64>, c: &MomentCoeffs<f64>, s: &MacroState<f64>, l: &MomentLayout, g: impl Fn(&[f64]) -> f64) -> f64 {
        let dim = l.dim();
        let sq = s.theta().sqrt();
        rule.integrate_nd(dim, |v| {
            let xi: Vec<f64> = v.iter().zip(s.u()).map(|(&x, &u)| u + sq * x).collect();
            reconstruct(c, s, l, &xi).unwrap() * inv_phi(v) * sq.powi(dim as i32) * g(&xi)
        })
    }

    fn quadrature_coeffs(rule: &QuadratureRule<f64>, c: &MomentCoeffs<f64>, s: &MacroState<f64>, l: &MomentLayout) -> Vec<f64> {
        let sq = s.theta().sqrt();
        l.indices()
            .iter()
            .map(|a| {
                let he = |xi: &[f64]| {
                    a.components().zip(xi.iter().zip(s.u())).map(|(n, (&x, &u))| crate::hermite::he_eval(n as i64, (x - u) / sq)).product::<f64>()
                };
                sq.powi(a.order() as i32) / a.factorial() * integrate(rule, c, s, l, he)
            })
            .collect()
    }

    fn random_state(seed: &[f64], layout: &MomentLayout) -> (MacroState<f64>, MomentCoeffs<f64>) {
        let dim = layout.dim();
        let u: Vec<f64> = (0..dim).map(|d| 0.3 * seed[d % seed.len()] - 0.1).collect();
        let s = MacroState::new(1.3, &u, 0.8 + 0.3 * seed[0].abs()).unwrap();
        let mut c = MomentCoeffs::zeros(layout);
        for (k, a) in layout.indices().iter().enumerate() {
            let scale = 0.5f64.powi(a.order() as i32);
            c[k] = scale * seed[k % seed.len()] * (1.0 + 0.1 * k as f64).sin();
        }
        enforce_constraints(c.as_mut_slice(), s.rho(), layout);
        (s, c)
    }

    #[test]
    fn maxwellian_examples() {
        let l = MomentLayout::new(3, 3).unwrap();
        let s = MacroState::new(7.0, &[0.0, 0.0, 0.0], 1.0).unwrap();
        let c = maxwellian_coeffs(&s, &l);
        assert_eq!(c[0], 7.0);
        assert!(c.as_slice()[1..].iter().all(|&x| x == 0.0));
        let s2 = MacroState::new(1.0, &[0.4, -1.0, 2.0], 2.0).unwrap();
        let c2 = maxwellian_coeffs(&s2, &l);
        assert_eq!(c2[0], 1.0);
        let at_u = reconstruct(&c2, &s2, &l, &[0.4, -1.0, 2.0]).unwrap();
        assert_relative_eq!(at_u, (2.0 * std::f64::consts::PI * 2.0).powf(-1.5), max_relative = 1e-14);
        // closed-form Maxwellian at sample points
        for k in 0..5 {
            let xi = [0.3 * k as f64 - 0.5, 0.1 * k as f64, 1.0 - 0.2 * k as f64];
            let r2: f64 = xi.iter().zip(s2.u()).map(|(x, u)| (x - u).powi(2)).sum();
            let exact = (2.0 * std::f64::consts::PI * 2.0).powf(-1.5) * (-r2 / 4.0).exp();
            assert!((reconstruct(&c2, &s2, &l, &xi).unwrap() - exact).abs() < 1e-12);
        }
        let z = MomentCoeffs::<f64>::zeros(&l);
        assert_eq!(reconstruct(&z, &s2, &l, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn stress_heat_examples() {
        let l = MomentLayout::new(3, 3).unwrap();
        let s = MacroState::new(2.0, &[0.0, 0.0, 0.0], 1.5).unwrap();
        let sh = stress_heat(&maxwellian_coeffs(&s, &l), &s, &l);
        assert_eq!(sh.q, [0.0; 3]);
        assert_eq!(sh.sigma, [[0.0; 3]; 3]);
        assert_eq!(sh.pressure_tensor[1][1], 3.0);
        let l1 = MomentLayout::new(3, 1).unwrap();
        let s1 = MacroState::new(1.0, &[0.0], 1.0).unwrap();
        let mut c1 = maxwellian_coeffs(&s1, &l1);
        c1[3] = 0.25;
        enforce_constraints(c1.as_mut_slice(), 1.0, &l1);
        let sh1 = stress_heat(&c1, &s1, &l1);
        assert_eq!(sh1.sigma[0][0], 0.0);
        assert_eq!(sh1.q[0], 0.75);
        let mut c = maxwellian_coeffs(&s, &l);
        let (a, b, cc) = (0.1, -0.2, 0.05);
        c[l.find(&MultiIndex::new(&[3, 0, 0]).unwrap()).unwrap()] = a;
        c[l.find(&MultiIndex::new(&[1, 2, 0]).unwrap()).unwrap()] = b;
        c[l.find(&MultiIndex::new(&[1, 0, 2]).unwrap()).unwrap()] = cc;
        assert_relative_eq!(stress_heat(&c, &s, &l).q[0], 3.0 * a + b + cc, epsilon = 1e-15);
    }

    #[test]
    fn stress_heat_matches_quadrature() {
        let rule = QuadratureRule::gauss_hermite(12);
        for dim in 1..=3 {
            let l = MomentLayout::new(5, dim).unwrap();
            let (s, c) = random_state(&[0.7, -0.4, 0.9, 0.2, -0.8], &l);
            let sh = stress_heat(&c, &s, &l);
            for i in 0..dim {
                for j in 0..dim {
                    let pij = integrate(&rule, &c, &s, &l, |xi| (xi[i] - s.u()[i]) * (xi[j] - s.u()[j]));
                    assert!((pij - sh.pressure_tensor[i][j]).abs() < 1e-8, "p{i}{j}");
                }
                let qi = integrate(&rule, &c, &s, &l, |xi| {
                    let c2: f64 = xi.iter().zip(s.u()).map(|(x, u)| (x - u).powi(2)).sum();
                    0.5 * c2 * (xi[i] - s.u()[i])
                });
                assert!((qi - sh.q[i]).abs() < 1e-8, "q{i}");
            }
        }
    }

    #[test]
    fn reconstruction_round_trip() {
        let rule = QuadratureRule::gauss_hermite(14);
        for dim in 1..=3 {
            let l = MomentLayout::new(5, dim).unwrap();
            let (s, c) = random_state(&[0.3, 0.6, -0.5, 1.0], &l);
            let back = quadrature_coeffs(&rule, &c, &s, &l);
            for k in 0..l.len() {
                assert!((back[k] - c[k]).abs() < 1e-10, "{k}: {} vs {}", back[k], c[k]);
            }
        }
    }

    #[test]
    fn conserved_round_trip() {
        let s = macro_from_conserved(1.0, &[0.0, 0.0, 0.0], 1.5).unwrap();
        assert_eq!((s.theta(), s.u1()), (1.0, 0.0));
        let s7 = macro_from_conserved(7.0, &[0.0, 0.0, 0.0], 1.5 * 7.0).unwrap();
        assert_relative_eq!(s7.theta(), 1.0, epsilon = 1e-15);
        let s3 = MacroState::new(1.7, &[0.3, -0.2, 0.9], 0.6).unwrap();
        let c = conserved_from_macro(&s3);
        let back = macro_from_conserved(c.rho, &c.momentum, c.energy).unwrap();
        assert_relative_eq!(back.theta(), 0.6, epsilon = 1e-14);
        assert_relative_eq!(back.u()[2], 0.9, epsilon = 1e-14);
        assert!(matches!(macro_from_conserved(1.0, &[2.0], 1.0), Err(Error::NonPositiveInternalEnergy { .. })));
        assert!(macro_from_conserved(-1.0, &[0.0], 1.0).is_err());
    }

    #[test]
    fn projection_identity_and_shifted_maxwellian() {
        let l = MomentLayout::new(4, 1).unwrap();
        let s = MacroState::new(1.0, &[0.0], 1.0).unwrap();
        let c = maxwellian_coeffs(&s, &l);
        let p = project_frame(&c, &s, &s, &l).unwrap();
        assert_eq!(p.coeffs, c);
        assert!(p.warning.is_none());
        // Maxwellian moving with u = δ expanded around u = 0:
        // exp(δ t) => f_n = δ^n / n!
        let d: f64 = 0.3;
        let moving = MacroState::new(1.0, &[d], 1.0).unwrap();
        let p = project_frame(&maxwellian_coeffs(&moving, &l), &moving, &s, &l).unwrap();
        for n in 0..=4usize {
            let exact = d.powi(n as i32) / (1..=n).product::<usize>() as f64;
            assert_relative_eq!(p.coeffs[n], exact, epsilon = 1e-15);
        }
    }

    #[test]
    fn projection_preserves_raw_moments() {
        let rule = QuadratureRule::gauss_hermite(30);
        let m = 6;
        let l = MomentLayout::new(m, 1).unwrap();
        let src = MacroState::new(1.0, &[0.0], 1.0).unwrap();
        let dst = MacroState::new(1.0, &[0.0], 1.6).unwrap();
        let c = maxwellian_coeffs(&src, &l);
        let p = project_frame(&c, &src, &dst, &l).unwrap();
        for k in 0..=m as i32 {
            let a = integrate(&rule, &c, &src, &l, |xi| xi[0].powi(k));
            let b = integrate(&rule, &p.coeffs, &dst, &l, |xi| xi[0].powi(k));
            assert!((a - b).abs() < 1e-9, "moment {k}: {a} vs {b}");
        }
        let cold = MacroState::new(1.0, &[0.0], 0.1).unwrap();
        let w = project_frame(&c, &src, &cold, &l).unwrap().warning;
        assert!(matches!(w, Some(ProjectionWarning::Degenerate { .. })));
        assert!(project_frame_ode(&c, &src, &cold, &l, 4).is_ok());
    }

    #[test]
    fn projection_agrees_with_ode() {
        let l = MomentLayout::new(4, 3).unwrap();
        let (s, c) = random_state(&[0.5, -0.3, 0.8], &l);
        let t = MacroState::new(s.rho(), &[0.2, 0.1, -0.3], 1.4).unwrap();
        let a = project_frame(&c, &s, &t, &l).unwrap().coeffs;
        let b = project_frame_ode(&c, &s, &t, &l, 20).unwrap();
        for k in 0..l.len() {
            assert!((a[k] - b[k]).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn own_frame_constraints(seed in prop::collection::vec(-1.0f64..1.0, 6), dim in 1usize..=3, m in 3usize..=6) {
            let l = MomentLayout::new(m, dim).unwrap();
            let (s, mut c) = random_state(&seed, &l);
            // perturb the conserved part so the frame really moves
            for d in 0..dim {
                c[l.unit(d)] = 0.2 * seed[d];
            }
            if let Some(k) = l.pure(0, 2) { c[k] += 0.1 * seed[5]; }
            let cons = conserved(c.as_slice(), s.u(), s.theta(), &l);
            let target = macro_from_conserved(cons.rho, &cons.momentum[..dim], cons.energy).unwrap();
            let p = project_frame(&c, &s, &target, &l).unwrap().coeffs;
            prop_assert!(constraint_residual(&p, &target, &l) < 1e-10);
            let back = project_frame(&p, &target, &s, &l).unwrap().coeffs;
            for k in 0..l.len() {
                prop_assert!((back[k] - c[k]).abs() < 1e-10);
            }
        }

        #[test]
        fn stress_heat_quadrature_random(seed in prop::collection::vec(-1.0f64..1.0, 5), dim in 1usize..=3, m in 3usize..=5) {
            let rule = QuadratureRule::gauss_hermite(10);
            let l = MomentLayout::new(m, dim).unwrap();
            let (s, c) = random_state(&seed, &l);
            let sh = stress_heat(&c, &s, &l);
            for i in 0..dim {
                let qi = integrate(&rule, &c, &s, &l, |xi| {
                    let c2: f64 = xi.iter().zip(s.u()).map(|(x, u)| (x - u).powi(2)).sum();
                    0.5 * c2 * (xi[i] - s.u()[i])
                });
                prop_assert!((qi - sh.q[i]).abs() < 1e-8);
            }
        }
    }
}
