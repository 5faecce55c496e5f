//! Maxwellian iteration on steady one-dimensional manufactured fields.
//!
//! Solving each moment equation for the coefficient that multiplies the
//! collision term gives the fixed point form `f_α = -τ G_α(f)` for `|α| ≥ 2`.
//! Starting from the Maxwellian (`f_0 = ρ`, all others zero) every sweep adds
//! one power of `τ`, which makes the iteration a practical tool to measure the
//! order of magnitude of each coefficient. Fields are steady, so `∂_t f_α`
//! vanishes, while `∂_t u` and `∂_t θ` come from the momentum and energy
//! balance laws evaluated with the current iterate.

use crate::closure::{nsf_limits, GradientData};
use crate::error::{Error, Result};
use crate::moments::{stress_heat, MacroState, MomentCoeffs};
use crate::multi_index::{MomentLayout, MultiIndex, MAX_DIM};
use crate::scalar::Real;

/// Default working order of the iteration.
pub const DEFAULT_WORKING_ORDER: usize = 10;

/// Smooth scalar profile with closed-form derivative.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile<T> {
    /// `mean + Σ (a_k cos kx + b_k sin kx)`, periodic on `[0, 2π)`.
    Trig { mean: T, modes: Vec<(usize, T, T)> },
    /// `Σ c_i x^i`.
    Poly(Vec<T>),
}

impl<T: Real> Profile<T> {
    pub fn constant(c: T) -> Self {
        Profile::Poly(vec![c])
    }

    pub fn eval(&self, x: T) -> T {
        match self {
            Profile::Trig { mean, modes } => modes.iter().fold(*mean, |acc, &(k, a, b)| {
                let kx = T::from_count(k) * x;
                acc + a * kx.cos() + b * kx.sin()
            }),
            Profile::Poly(c) => c.iter().rev().fold(T::zero(), |acc, &ci| acc * x + ci),
        }
    }

    pub fn deriv(&self, x: T) -> T {
        match self {
            Profile::Trig { modes, .. } => modes.iter().fold(T::zero(), |acc, &(k, a, b)| {
                let kk = T::from_count(k);
                acc + kk * (b * (kk * x).cos() - a * (kk * x).sin())
            }),
            Profile::Poly(c) => c.iter().enumerate().skip(1).rev().fold(T::zero(), |acc, (i, &ci)| acc * x + T::from_count(i) * ci),
        }
    }

    fn is_periodic(&self) -> bool {
        match self {
            Profile::Trig { .. } => true,
            Profile::Poly(c) => c.iter().skip(1).all(|&x| x == T::zero()),
        }
    }
}

/// Steady macroscopic fields `ρ(x)`, `u(x)`, `θ(x)` sampled on a uniform grid.
#[derive(Clone, Debug)]
pub struct ManufacturedField<T> {
    dim: usize,
    rho: Profile<T>,
    u: Vec<Profile<T>>,
    theta: Profile<T>,
    points: Vec<T>,
    dx: T,
    periodic: bool,
}

impl<T: Real> ManufacturedField<T> {
    /// Periodic field on `[0, 2π)` with `n` points. All profiles must be
    /// trigonometric or constant.
    pub fn periodic(dim: usize, rho: Profile<T>, u: Vec<Profile<T>>, theta: Profile<T>, n: usize) -> Result<Self> {
        let two_pi = T::lit(std::f64::consts::TAU);
        let dx = two_pi / T::from_count(n);
        let points = (0..n).map(|i| T::from_count(i) * dx).collect();
        let f = Self::build(dim, rho, u, theta, points, dx, true)?;
        if !(f.rho.is_periodic() && f.theta.is_periodic() && f.u.iter().all(Profile::is_periodic)) {
            return Err(Error::InvalidConfig("periodic field needs trigonometric or constant profiles".into()));
        }
        Ok(f)
    }

    /// Field sampled at `n` points of `[a, b]` without periodic wrap. Only the
    /// first sweep from the Maxwellian can be evaluated on such a field.
    pub fn sampled(dim: usize, rho: Profile<T>, u: Vec<Profile<T>>, theta: Profile<T>, a: T, b: T, n: usize) -> Result<Self> {
        let dx = (b - a) / T::from_count(n.max(2) - 1);
        let points = (0..n).map(|i| a + T::from_count(i) * dx).collect();
        Self::build(dim, rho, u, theta, points, dx, false)
    }

    fn build(dim: usize, rho: Profile<T>, mut u: Vec<Profile<T>>, theta: Profile<T>, points: Vec<T>, dx: T, periodic: bool) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidDimension(dim));
        }
        if u.len() > dim {
            return Err(Error::DimensionMismatch { expected: dim, got: u.len() });
        }
        u.resize(dim, Profile::constant(T::zero()));
        let f = Self { dim, rho, u, theta, points, dx, periodic };
        for &x in &f.points {
            if !(f.rho.eval(x) > T::zero()) {
                return Err(Error::NonPositiveDensity(f.rho.eval(x).to_f64_lossy()));
            }
            if !(f.theta.eval(x) > T::zero()) {
                return Err(Error::NonPositiveTemperature(f.theta.eval(x).to_f64_lossy()));
            }
        }
        Ok(f)
    }

    /// A generic periodic field with every velocity component non-trivial.
    pub fn generic(dim: usize, n: usize) -> Result<Self> {
        let trig = |mean: f64, modes: &[(usize, f64, f64)]| Profile::Trig {
            mean: T::lit(mean),
            modes: modes.iter().map(|&(k, a, b)| (k, T::lit(a), T::lit(b))).collect(),
        };
        let u = [
            trig(0.3, &[(1, 0.25, 0.1), (2, -0.05, 0.08)]),
            trig(-0.1, &[(1, 0.15, -0.2), (3, 0.03, 0.0)]),
            trig(0.05, &[(2, -0.12, 0.07), (1, 0.0, 0.1)]),
        ];
        Self::periodic(
            dim,
            trig(1.0, &[(1, 0.2, -0.1), (2, 0.05, 0.07)]),
            u.into_iter().take(dim).collect(),
            trig(1.0, &[(1, -0.15, 0.12), (3, 0.04, -0.03)]),
            n,
        )
    }

    /// Global equilibrium.
    pub fn equilibrium(dim: usize, n: usize) -> Result<Self> {
        let c = |v: f64| Profile::constant(T::lit(v));
        Self::periodic(dim, c(1.0), (0..dim).map(|_| c(0.2)).collect(), c(1.0), n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn macro_at(&self, i: usize) -> MacroState<T> {
        let x = self.points[i];
        let u: Vec<T> = self.u.iter().map(|p| p.eval(x)).collect();
        MacroState::new(self.rho.eval(x), &u, self.theta.eval(x)).expect("positivity checked on construction")
    }

    /// Analytic gradients of the macroscopic fields at point `i`; the
    /// coefficient gradients are left empty.
    pub fn macro_gradient(&self, i: usize) -> GradientData<T> {
        let x = self.points[i];
        let mut du = [T::zero(); MAX_DIM];
        for (d, p) in self.u.iter().enumerate() {
            du[d] = p.deriv(x);
        }
        GradientData { drho: self.rho.deriv(x), du, dtheta: self.theta.deriv(x), dcoeffs: Vec::new() }
    }

    // Fourth order central difference on the periodic grid.
    fn derivative(&self, values: &[T], out: &mut [T]) {
        let n = values.len();
        let c = T::one() / (T::lit(12.0) * self.dx);
        let eight = T::lit(8.0);
        for i in 0..n {
            let at = |o: isize| values[((i as isize + o).rem_euclid(n as isize)) as usize];
            out[i] = c * (at(-2) - eight * at(-1) + eight * at(1) - at(2));
        }
    }
}

/// Iterate `F^{(n)}` on the grid, stored coefficient-major
/// (`values[k * points + i]`).
#[derive(Clone, Debug)]
pub struct IterationState<T> {
    n: usize,
    layout: MomentLayout,
    points: usize,
    values: Vec<T>,
}

impl<T: Real> IterationState<T> {
    /// The Maxwellian starting point `F^{(0)}`.
    pub fn maxwellian(field: &ManufacturedField<T>, working_order: usize) -> Result<Self> {
        let layout = MomentLayout::new(working_order, field.dim())?;
        let points = field.len();
        let mut values = vec![T::zero(); layout.len() * points];
        for i in 0..points {
            values[i] = field.macro_at(i).rho();
        }
        Ok(Self { n: 0, layout, points, values })
    }

    pub fn iteration(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> &MomentLayout {
        &self.layout
    }

    /// Field of one coefficient over the grid.
    pub fn coefficient(&self, k: usize) -> &[T] {
        &self.values[k * self.points..(k + 1) * self.points]
    }

    pub fn coefficient_of(&self, alpha: &MultiIndex) -> Result<&[T]> {
        Ok(self.coefficient(self.layout.ordinal(alpha)?))
    }

    /// Coefficients at one grid point.
    pub fn coeffs_at(&self, i: usize) -> MomentCoeffs<T> {
        let v = (0..self.layout.len()).map(|k| self.values[k * self.points + i]).collect();
        MomentCoeffs::from_vec(&self.layout, v).expect("layout length")
    }

    /// Component-wise sum with another state of the same shape.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += *b;
        }
        out
    }

    /// Max-norm distance to another state.
    pub fn max_difference(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// State with the given coefficient values and iteration counter.
    pub fn from_values(layout: MomentLayout, points: usize, values: Vec<T>, n: usize) -> Result<Self> {
        if values.len() != layout.len() * points {
            return Err(Error::DimensionMismatch { expected: layout.len() * points, got: values.len() });
        }
        Ok(Self { n, layout, points, values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Time derivatives of velocity and temperature implied by the balance laws.
#[derive(Clone, Debug, PartialEq)]
pub struct Rates<T> {
    pub du_dt: Vec<[T; MAX_DIM]>,
    pub dtheta_dt: Vec<T>,
}

fn ensure_periodic<T: Real>(field: &ManufacturedField<T>, state: &IterationState<T>) -> Result<()> {
    let higher = &state.values[state.layout.grade(2).start * state.points..];
    if !field.periodic && higher.iter().any(|&x| x != T::zero()) {
        return Err(Error::InvalidConfig("spatial derivatives of iterates need a periodic field".into()));
    }
    Ok(())
}

/// `∂_t u_i = -u_1 ∂_x u_i - (∂_x p δ_{i1} + ∂_x σ_{i1})/ρ` and
/// `∂_t θ = -u_1 ∂_x θ - 2(∂_x q_1 + Σ_i p_{i1} ∂_x u_i)/(Dρ)`.
pub fn rates<T: Real>(field: &ManufacturedField<T>, state: &IterationState<T>) -> Result<Rates<T>> {
    ensure_periodic(field, state)?;
    let np = field.len();
    let dim = field.dim();
    let layout = &state.layout;
    let mut sigma_col = vec![vec![T::zero(); np]; dim];
    let mut q1 = vec![T::zero(); np];
    let mut p_col = vec![[T::zero(); MAX_DIM]; np];
    for i in 0..np {
        let sh = stress_heat(&state.coeffs_at(i), &field.macro_at(i), layout);
        for d in 0..dim {
            sigma_col[d][i] = sh.sigma[d][0];
            p_col[i][d] = sh.pressure_tensor[d][0];
        }
        q1[i] = sh.q[0];
    }
    let mut dsigma = vec![vec![T::zero(); np]; dim];
    let mut dq = vec![T::zero(); np];
    if field.periodic {
        for d in 0..dim {
            field.derivative(&sigma_col[d], &mut dsigma[d]);
        }
        field.derivative(&q1, &mut dq);
    }
    let two = T::lit(2.0);
    let mut du_dt = vec![[T::zero(); MAX_DIM]; np];
    let mut dtheta_dt = vec![T::zero(); np];
    for i in 0..np {
        let m = field.macro_at(i);
        let g = field.macro_gradient(i);
        let (rho, u1) = (m.rho(), m.u1());
        for d in 0..dim {
            let mut rhs = dsigma[d][i];
            if d == 0 {
                rhs += g.dpressure(&m);
            }
            du_dt[i][d] = -u1 * g.du[d] - rhs / rho;
        }
        let work: T = (0..dim).map(|d| p_col[i][d] * g.du[d]).sum();
        dtheta_dt[i] = -u1 * g.dtheta - two * (dq[i] + work) / (T::from_count(dim) * rho);
    }
    Ok(Rates { du_dt, dtheta_dt })
}

/// `G_α(F)` for every `|α| ≥ 2` of the working layout, with given rates.
/// For fixed rates the map is linear in `F`. Lower orders of the result are
/// zero; coefficients above the working order are taken as zero.
pub fn apply_operator<T: Real>(field: &ManufacturedField<T>, state: &IterationState<T>, rates: &Rates<T>) -> Result<Vec<T>> {
    ensure_periodic(field, state)?;
    let layout = &state.layout;
    let np = state.points;
    let dim = layout.dim();
    let nk = layout.len();
    let mut dvals = vec![T::zero(); nk * np];
    if field.periodic {
        for k in layout.grade(2).start..nk {
            field.derivative(state.coefficient(k), &mut dvals[k * np..(k + 1) * np]);
        }
    }
    let half = T::lit(0.5);
    let mut out = vec![T::zero(); nk * np];
    let f = |k: Option<usize>, i: usize| k.map_or(T::zero(), |k| state.values[k * np + i]);
    let df = |k: Option<usize>, i: usize| k.map_or(T::zero(), |k| dvals[k * np + i]);
    for k in layout.grade(2).start..nk {
        let a = layout.indices()[k];
        let a1 = T::from_count(a.get(0) + 1);
        let s = |shifts: &[(usize, i32)]| layout.shifted(k, shifts);
        for i in 0..np {
            let m = field.macro_at(i);
            let g = field.macro_gradient(i);
            let (theta, u1) = (m.theta(), m.u1());
            let mut acc = T::zero();
            for d in 0..dim {
                acc += rates.du_dt[i][d] * f(s(&[(d, -1)]), i);
                acc += half * rates.dtheta_dt[i] * f(s(&[(d, -2)]), i);
            }
            acc += theta * df(s(&[(0, -1)]), i) + u1 * df(Some(k), i) + a1 * df(s(&[(0, 1)]), i);
            for d in 0..dim {
                acc += g.du[d] * (theta * f(s(&[(d, -1), (0, -1)]), i) + u1 * f(s(&[(d, -1)]), i) + a1 * f(s(&[(d, -1), (0, 1)]), i));
                acc += half * g.dtheta * (theta * f(s(&[(d, -2), (0, -1)]), i) + u1 * f(s(&[(d, -2)]), i) + a1 * f(s(&[(d, -2), (0, 1)]), i));
            }
            out[k * np + i] = acc;
        }
    }
    Ok(out)
}

/// One sweep `F^{(n+1)} = -τ G(F^{(n)})`; `f_0` and `f_{e_i}` are kept.
pub fn iterate_once<T: Real>(state: &IterationState<T>, field: &ManufacturedField<T>, tau: T) -> Result<IterationState<T>> {
    let r = rates(field, state)?;
    let g = apply_operator(field, state, &r)?;
    let np = state.points;
    let start = state.layout.grade(2).start * np;
    let mut values = state.values.clone();
    for (v, &gk) in values[start..].iter_mut().zip(&g[start..]) {
        *v = -tau * gk;
    }
    Ok(IterationState { n: state.n + 1, layout: state.layout.clone(), points: np, values })
}

/// Runs `n` sweeps from the Maxwellian.
pub fn iterate<T: Real>(field: &ManufacturedField<T>, tau: T, n: usize, working_order: usize) -> Result<IterationState<T>> {
    let mut s = IterationState::maxwellian(field, working_order)?;
    for _ in 0..n {
        s = iterate_once(&s, field, tau)?;
    }
    Ok(s)
}

/// Predicted leading power of `τ` in `f_α`: `⌈|α|/3⌉` for `|α| ≥ 2`, except
/// `f_{e_i+e_j+e_k}` with distinct `i, j, k` which starts at `τ²`.
pub fn predicted_exponent(alpha: &MultiIndex) -> usize {
    let n = alpha.order();
    if n == 3 && alpha.components().all(|c| c == 1) {
        return 2;
    }
    n.div_ceil(3)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Measured exponent of one coefficient, or of a whole grade.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeRow {
    pub alpha: MultiIndex,
    pub order: usize,
    pub predicted: usize,
    /// `None` when the coefficient vanishes identically for every `τ`.
    pub measured: Option<f64>,
}

impl MagnitudeRow {
    pub fn is_degenerate(&self) -> bool {
        self.measured.is_none()
    }
}

/// Exponent table for all `2 ≤ |α| ≤ working_order` from `n` sweeps, using
/// the RMS of each coefficient over the grid.
pub fn magnitude_table<T: Real>(field: &ManufacturedField<T>, taus: &[T], n: usize, working_order: usize) -> Result<Vec<MagnitudeRow>> {
    if taus.len() < 2 {
        return Err(Error::InvalidConfig("magnitude sweep needs at least two values of tau".into()));
    }
    let runs: Vec<IterationState<T>> = taus.iter().map(|&t| iterate(field, t, n, working_order)).collect::<Result<_>>()?;
    let layout = runs[0].layout.clone();
    let xs: Vec<f64> = taus.iter().map(|t| t.to_f64_lossy()).collect();
    let mut rows = Vec::new();
    for k in layout.grade(2).start..layout.len() {
        let norms: Vec<f64> = runs.iter().map(|r| rms(r.coefficient(k))).collect();
        let alpha = layout.indices()[k];
        rows.push(MagnitudeRow { alpha, order: alpha.order(), predicted: predicted_exponent(&alpha), measured: slope_or_degenerate(&xs, &norms) });
    }
    Ok(rows)
}

/// Per-grade exponents `(order, predicted, measured)` for `2 ≤ |α| ≤ working_order`.
pub fn grade_table<T: Real>(field: &ManufacturedField<T>, taus: &[T], n: usize, working_order: usize) -> Result<Vec<(usize, usize, Option<f64>)>> {
    let runs: Vec<IterationState<T>> = taus.iter().map(|&t| iterate(field, t, n, working_order)).collect::<Result<_>>()?;
    let layout = runs[0].layout.clone();
    let xs: Vec<f64> = taus.iter().map(|t| t.to_f64_lossy()).collect();
    Ok((2..=working_order)
        .map(|order| {
            let norms: Vec<f64> = runs
                .iter()
                .map(|r| {
                    let all: Vec<T> = layout.grade(order).flat_map(|k| r.coefficient(k).iter().copied()).collect();
                    rms(&all)
                })
                .collect();
            (order, order.div_ceil(3), slope_or_degenerate(&xs, &norms))
        })
        .collect())
}

/// Exponent of a single coefficient.
pub fn magnitude_exponent<T: Real>(
    alpha: &MultiIndex,
    field: &ManufacturedField<T>,
    taus: &[T],
    n: usize,
    working_order: usize,
) -> Result<Option<f64>> {
    let rows = magnitude_table(field, taus, n, working_order)?;
    rows.into_iter().find(|r| r.alpha == *alpha).map(|r| r.measured).ok_or(Error::OrderTooHigh { order: alpha.order(), max: working_order })
}

fn rms<T: Real>(v: &[T]) -> f64 {
    let s: f64 = v.iter().map(|x| x.to_f64_lossy().powi(2)).sum();
    (s / v.len().max(1) as f64).sqrt()
}

fn slope_or_degenerate(xs: &[f64], norms: &[f64]) -> Option<f64> {
    if norms.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        None
    } else {
        Some(log_slope(xs, norms))
    }
}

/// Largest deviation of the iterate's `σ` and `q` from the Navier–Stokes and
/// Fourier laws over the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsfReport {
    pub sigma_deviation: f64,
    pub q_deviation: f64,
    pub sigma_scale: f64,
    pub q_scale: f64,
}

pub fn nsf_check<T: Real>(field: &ManufacturedField<T>, tau: T, iterations: usize, working_order: usize) -> Result<NsfReport> {
    let s = iterate(field, tau, iterations.max(1), working_order)?;
    let dim = field.dim();
    let mut rep = NsfReport { sigma_deviation: 0.0, q_deviation: 0.0, sigma_scale: 0.0, q_scale: 0.0 };
    for i in 0..field.len() {
        let m = field.macro_at(i);
        let sh = stress_heat(&s.coeffs_at(i), &m, &s.layout);
        let (sigma, q) = nsf_limits(&m, std::slice::from_ref(&field.macro_gradient(i)), tau);
        for a in 0..dim {
            for b in 0..dim {
                rep.sigma_deviation = rep.sigma_deviation.max((sh.sigma[a][b] - sigma[a][b]).to_f64_lossy().abs());
                rep.sigma_scale = rep.sigma_scale.max(sigma[a][b].to_f64_lossy().abs());
            }
            rep.q_deviation = rep.q_deviation.max((sh.q[a] - q[a]).to_f64_lossy().abs());
            rep.q_scale = rep.q_scale.max(q[a].to_f64_lossy().abs());
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(c: &[usize]) -> MultiIndex {
        MultiIndex::new(c).unwrap()
    }

    #[test]
    fn profiles_differentiate() {
        let p = Profile::<f64>::Trig { mean: 1.0, modes: vec![(2, 0.3, -0.2)] };
        let h = 1e-5;
        let x = 0.7;
        assert!(((p.eval(x + h) - p.eval(x - h)) / (2.0 * h) - p.deriv(x)).abs() < 1e-9);
        let q = Profile::Poly(vec![1.0, 2.0, 3.0]);
        assert_eq!(q.eval(2.0), 17.0);
        assert_eq!(q.deriv(2.0), 14.0);
    }

    #[test]
    fn first_sweep_zero_beyond_order_three() {
        let field = ManufacturedField::<f64>::generic(3, 32).unwrap();
        let s = iterate(&field, 0.01, 1, 6).unwrap();
        for k in s.layout().grade(4).start..s.layout().len() {
            assert!(s.coefficient(k).iter().all(|&v| v == 0.0));
        }
        let ijk = s.coefficient_of(&idx(&[1, 1, 1])).unwrap();
        assert!(ijk.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_stays_maxwellian() {
        let field = ManufacturedField::<f64>::equilibrium(3, 16).unwrap();
        let s = iterate(&field, 0.1, 3, 9).unwrap();
        let start = s.layout().grade(2).start;
        assert!(s.values()[start * 16..].iter().all(|&v| v == 0.0));
        let rep = nsf_check(&field, 0.1, 1, 4).unwrap();
        assert_eq!((rep.sigma_deviation, rep.q_deviation), (0.0, 0.0));
    }

    #[test]
    fn fourier_and_shear_at_first_sweep() {
        // constant u, linear θ: q follows Fourier's law
        let c = Profile::constant;
        let field = ManufacturedField::sampled(3, c(1.2), vec![c(0.4), c(0.0), c(0.0)], Profile::Poly(vec![1.0, 0.3]), 0.0, 1.0, 5).unwrap();
        let rep = nsf_check(&field, 0.05, 1, 4).unwrap();
        assert!(rep.q_scale > 0.0);
        assert!(rep.q_deviation <= 1e-15 * rep.q_scale);
        // linear transverse velocity, constant θ: σ_12 = -τρθ ∂u_2/∂x
        let field = ManufacturedField::sampled(3, c(1.2), vec![c(0.0), Profile::Poly(vec![0.0, 0.5]), c(0.0)], c(0.9), 0.0, 1.0, 5).unwrap();
        let s = iterate(&field, 0.05, 1, 4).unwrap();
        for &v in s.coefficient_of(&idx(&[1, 1, 0])).unwrap() {
            assert!((v + 0.05 * 1.2 * 0.9 * 0.5_f64).abs() < 1e-15);
        }
    }

    #[test]
    fn nsf_deviation_is_second_order() {
        let field = ManufacturedField::<f64>::generic(3, 64).unwrap();
        let a = nsf_check(&field, 2e-3, 3, 9).unwrap();
        let b = nsf_check(&field, 1e-3, 3, 9).unwrap();
        assert!(a.sigma_deviation / b.sigma_deviation > 3.6);
        assert!(a.q_deviation / b.q_deviation > 3.6);
    }

    #[test]
    fn non_periodic_fields_stop_after_first_sweep() {
        let c = Profile::constant;
        let field = ManufacturedField::sampled(1, c(1.0), vec![c(0.0)], Profile::Poly(vec![1.0, 0.3]), 0.0, 1.0, 5).unwrap();
        let s = iterate(&field, 0.05, 1, 4).unwrap();
        assert!(iterate_once(&s, &field, 0.05).is_err());
    }

    fn random_field(c: &[f64]) -> ManufacturedField<f64> {
        let trig = |mean: f64, a: f64, b: f64, k: usize| Profile::Trig { mean, modes: vec![(k, a, b), (k + 1, 0.3 * b, 0.3 * a)] };
        let u = vec![trig(c[0], 0.2 * c[1], 0.2 * c[2], 1), trig(0.1 * c[3], 0.2 * c[4], 0.1 * c[5], 2), trig(0.0, 0.1 * c[6], 0.1 * c[7], 1)];
        ManufacturedField::periodic(3, trig(1.0, 0.15 * c[8], 0.1 * c[9], 1), u, trig(1.0, 0.1 * c[10], 0.15 * c[11], 1), 24).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn operator_linear_on_random_fields(c in proptest::collection::vec(-1.0f64..1.0, 12), t1 in 0.01f64..0.2, t2 in 0.01f64..0.2) {
            let field = random_field(&c);
            let a = iterate(&field, t1, 2, 6).unwrap();
            let b = iterate(&field, t2, 3, 6).unwrap();
            let r = rates(&field, &a).unwrap();
            let ga = apply_operator(&field, &a, &r).unwrap();
            let gb = apply_operator(&field, &b, &r).unwrap();
            let gab = apply_operator(&field, &a.add(&b), &r).unwrap();
            let scale = gab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..gab.len() {
                proptest::prop_assert!((gab[k] - ga[k] - gb[k]).abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn leading_order_is_never_changed(c in proptest::collection::vec(-1.0f64..1.0, 12)) {
            // once f_α carries its leading power τ^k, the next sweep only adds O(τ^{k+1})
            let field = random_field(&c);
            let taus = [1e-4, 2e-4, 4e-4];
            for n in 1..=2usize {
                let now: Vec<IterationState<f64>> = taus.iter().map(|&t| iterate(&field, t, n, 3 * n + 3).unwrap()).collect();
                let next: Vec<IterationState<f64>> = taus.iter().map(|&t| iterate(&field, t, n + 1, 3 * n + 3).unwrap()).collect();
                let layout = now[0].layout().clone();
                for (k, alpha) in layout.indices().iter().enumerate().skip(layout.grade(2).start) {
                    let p = predicted_exponent(alpha);
                    if p > n {
                        continue;
                    }
                    let f: Vec<f64> = now.iter().map(|s| rms(s.coefficient(k))).collect();
                    let Some(e) = slope_or_degenerate(&taus, &f) else { continue };
                    if (e - p as f64).abs() > 0.15 {
                        continue;
                    }
                    let d: Vec<f64> = now
                        .iter()
                        .zip(&next)
                        .map(|(a, b)| rms(&a.coefficient(k).iter().zip(b.coefficient(k)).map(|(x, y)| y - x).collect::<Vec<_>>()))
                        .collect();
                    if let Some(ed) = slope_or_degenerate(&taus, &d) {
                        proptest::prop_assert!(ed >= e + 0.85, "n = {n}, {alpha}: {e} -> {ed}");
                    }
                }
            }
        }
    }

    #[test]
    fn operator_is_linear_for_fixed_rates() {
        let field = ManufacturedField::<f64>::generic(3, 24).unwrap();
        let a = iterate(&field, 0.1, 2, 7).unwrap();
        let b = iterate(&field, 0.07, 3, 7).unwrap();
        let r = rates(&field, &a).unwrap();
        let ga = apply_operator(&field, &a, &r).unwrap();
        let gb = apply_operator(&field, &b, &r).unwrap();
        let gab = apply_operator(&field, &a.add(&b), &r).unwrap();
        let scale = gab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..gab.len() {
            assert!((gab[k] - ga[k] - gb[k]).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn magnitude_law_on_generic_field() {
        let field = ManufacturedField::<f64>::generic(3, 48).unwrap();
        let taus: Vec<f64> = (0..4).map(|k| 1e-4 * 2f64.powi(k)).collect();
        let grades = grade_table(&field, &taus, 3, 10).unwrap();
        for &(order, predicted, measured) in &grades {
            if order <= 9 {
                let m = measured.expect("generic grade is non-zero");
                assert!((m - predicted as f64).abs() <= 0.15, "grade {order}: {m}");
            } else {
                assert!(measured.is_none(), "grade {order} must vanish after 3 sweeps");
            }
        }
        let rows = magnitude_table(&field, &taus, 2, 8).unwrap();
        for r in rows {
            if r.order >= 7 {
                assert!(r.is_degenerate());
            } else if let Some(m) = r.measured {
                assert!(m >= r.predicted as f64 - 0.15, "{}: {m}", r.alpha);
            }
        }
        // with one space dimension the τ² part of f_{(1,1,1)} cancels as well
        let e = magnitude_exponent(&idx(&[1, 1, 1]), &field, &taus, 2, 6).unwrap().unwrap();
        assert!(e >= 1.85, "{e}");
        let e = magnitude_exponent(&idx(&[3, 0, 0]), &field, &taus, 2, 6).unwrap().unwrap();
        assert!((e - 1.0).abs() < 0.15, "{e}");
    }

    #[test]
    fn predicted_exponents() {
        assert_eq!(predicted_exponent(&idx(&[2, 0, 0])), 1);
        assert_eq!(predicted_exponent(&idx(&[1, 1, 1])), 2);
        assert_eq!(predicted_exponent(&idx(&[2, 1, 1])), 2);
        assert_eq!(predicted_exponent(&idx(&[7, 0, 0])), 3);
    }
}
