//! Discrete-velocity BGK solver in one space dimension, used as reference.
//!
//! For `D > 1` the distribution is reduced to `g(v) = ∫ f dv_⊥` and
//! `h(v) = ∫ |v_⊥|²/2 f dv_⊥`, which is exact for the BGK equation with
//! one-dimensional data. Transport is first-order upwind and relaxation is
//! exact towards a discrete Maxwellian whose moments are corrected to match
//! the cell's mass, momentum and energy.

use crate::error::{Error, Result};
use crate::fv::{ProfileRow, RunReport};
use crate::moments::MacroState;
use crate::scenarios::{BoundaryKind, RunSettings, StopCriterion, TauModel};

/// Reference velocity resolution.
pub const REFERENCE_VELOCITIES: usize = 200;
pub const REFERENCE_VMAX: f64 = 12.0;
pub const REFERENCE_CELLS: usize = 2000;

/// Uniform symmetric velocity grid `-v_max = v_0 < ... < v_{n-1} = v_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    nodes: Vec<f64>,
    dv: f64,
}

impl VelocityGrid {
    pub fn new(count: usize, v_max: f64) -> Result<Self> {
        if count < 8 || !(v_max > 0.0) {
            return Err(Error::InvalidConfig(format!("velocity grid needs at least 8 nodes and v_max > 0 (got {count}, {v_max})")));
        }
        let dv = 2.0 * v_max / (count - 1) as f64;
        let nodes = (0..count).map(|j| -v_max + j as f64 * dv).collect();
        Ok(VelocityGrid { nodes, dv })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn v_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Whether the grid spans `5√θ_max + |u|_max`.
    pub fn covers(&self, theta_max: f64, u_max: f64) -> bool {
        self.v_max() >= 5.0 * theta_max.sqrt() + u_max.abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DvmConfig {
    pub cells: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub dim: usize,
    /// `f64::INFINITY` switches collisions off.
    pub kn: f64,
    pub tau_model: TauModel,
    pub boundary: BoundaryKind,
    pub cfl: f64,
}

impl DvmConfig {
    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.cells as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }
}

/// Per-cell reduced distributions, stored cell-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    g: Vec<f64>,
    h: Vec<f64>,
    nv: usize,
    pub time: f64,
    pub steps: usize,
}

impl ReducedState {
    pub fn from_parts(nv: usize, g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if nv == 0 || !g.len().is_multiple_of(nv) || g.len() != h.len() {
            return Err(Error::DimensionMismatch { expected: g.len(), got: h.len() });
        }
        Ok(ReducedState { g, h, nv, time: 0.0, steps: 0 })
    }

    pub fn cells(&self) -> usize {
        self.g.len() / self.nv
    }

    pub fn g(&self, i: usize) -> &[f64] {
        &self.g[i * self.nv..(i + 1) * self.nv]
    }

    pub fn h(&self, i: usize) -> &[f64] {
        &self.h[i * self.nv..(i + 1) * self.nv]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DvmMoments {
    pub rho: f64,
    pub u: f64,
    pub theta: f64,
    pub sigma11: f64,
    pub q1: f64,
}

pub struct DvmSolver {
    config: DvmConfig,
    grid: VelocityGrid,
    ghosts: Option<[(Vec<f64>, Vec<f64>); 2]>,
}

impl DvmSolver {
    pub fn new(config: DvmConfig, grid: VelocityGrid, far_field: Option<(MacroState<f64>, MacroState<f64>)>) -> Result<Self> {
        if !(1..=3).contains(&config.dim) {
            return Err(Error::InvalidDimension(config.dim));
        }
        if config.cells < 4 || !(config.x_hi > config.x_lo) || !(config.cfl > 0.0 && config.cfl <= 1.0) || !(config.kn > 0.0) {
            return Err(Error::InvalidConfig("invalid discrete-velocity configuration".into()));
        }
        let mut s = DvmSolver { config, grid, ghosts: None };
        if s.config.boundary == BoundaryKind::FarField {
            let (l, r) = far_field.ok_or_else(|| Error::InvalidConfig("far-field boundaries need ghost states".into()))?;
            s.ghosts = Some([s.equilibrium(l.rho(), l.u1(), l.theta())?, s.equilibrium(r.rho(), r.u1(), r.theta())?]);
        }
        Ok(s)
    }

    /// Reference solver for a scenario at the given spatial and velocity resolution.
    pub fn for_scenario(settings: &RunSettings, cells: usize, nv: usize, v_max: f64) -> Result<(Self, ReducedState)> {
        let sc = &settings.scenario;
        let config = DvmConfig {
            cells,
            x_lo: sc.x_lo,
            x_hi: sc.x_hi,
            dim: sc.dim,
            kn: sc.kn,
            tau_model: sc.tau_model,
            boundary: sc.boundary,
            cfl: settings.cfl,
        };
        let far = match sc.far_field() {
            Some((l, r)) => Some((l.to_macro(sc.dim)?, r.to_macro(sc.dim)?)),
            None => None,
        };
        let solver = DvmSolver::new(config, VelocityGrid::new(nv, v_max)?, far)?;
        let state = solver.equilibrium_state(|x| sc.initial_state(x))?;
        Ok((solver, state))
    }

    pub fn config(&self) -> &DvmConfig {
        &self.config
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    /// Discrete Maxwellian `g`, `h` with exactly the moments `ρ`, `ρu`, `E`.
    pub fn equilibrium(&self, rho: f64, u: f64, theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = vec![0.0; self.grid.len()];
        let mut h = vec![0.0; self.grid.len()];
        self.equilibrium_into(rho, u, theta, &mut g, &mut h)?;
        Ok((g, h))
    }

    fn equilibrium_into(&self, rho: f64, u: f64, theta: f64, g: &mut [f64], h: &mut [f64]) -> Result<()> {
        if !(rho > 0.0 && theta > 0.0) {
            return Err(Error::InvalidConfig(format!("non-realizable moments rho={rho}, theta={theta}")));
        }
        let dv = self.grid.dv;
        let norm = rho / (std::f64::consts::TAU * theta).sqrt();
        // Gaussian on the uniform grid by a multiplicative recurrence outward
        // from the node closest to u
        let nodes = &self.grid.nodes;
        let nv = nodes.len();
        let j0 = (((u - nodes[0]) / dv).round().max(0.0) as usize).min(nv - 1);
        let c0 = nodes[j0] - u;
        g[j0] = norm * (-c0 * c0 / (2.0 * theta)).exp();
        let step = (-dv * dv / theta).exp();
        let mut ratio = (-(2.0 * c0 * dv + dv * dv) / (2.0 * theta)).exp();
        for j in j0 + 1..nv {
            g[j] = g[j - 1] * ratio;
            ratio *= step;
        }
        let mut ratio = ((2.0 * c0 * dv - dv * dv) / (2.0 * theta)).exp();
        for j in (0..j0).rev() {
            g[j] = g[j + 1] * ratio;
            ratio *= step;
        }
        let mut s = [0.0f64; 5];
        for (&gj, &v) in g.iter().zip(nodes) {
            let c = v - u;
            let mut p = gj * dv;
            for sk in s.iter_mut() {
                *sk += p;
                p *= c;
            }
        }
        // correction a + b c + d c² matching Σ g{1, c, c²} = (ρ, 0, ρθ)
        let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
        let coef = solve3(m, [rho, 0.0, rho * theta]).ok_or_else(|| Error::InvalidConfig("discrete Maxwellian moment system is singular".into()))?;
        let kappa = 0.5 * (self.config.dim - 1) as f64 * theta;
        for (gj, (hj, &v)) in g.iter_mut().zip(h.iter_mut().zip(&self.grid.nodes)) {
            let c = v - u;
            *gj *= coef[0] + c * (coef[1] + c * coef[2]);
            *hj = kappa * *gj;
        }
        Ok(())
    }

    pub fn equilibrium_state(&self, init: impl Fn(f64) -> Result<MacroState<f64>>) -> Result<ReducedState> {
        let nv = self.grid.len();
        let mut g = vec![0.0; self.config.cells * nv];
        let mut h = vec![0.0; self.config.cells * nv];
        for i in 0..self.config.cells {
            let m = init(self.config.cell_center(i))?;
            self.equilibrium_into(m.rho(), m.u1(), m.theta(), &mut g[i * nv..(i + 1) * nv], &mut h[i * nv..(i + 1) * nv])?;
        }
        ReducedState::from_parts(nv, g, h)
    }

    /// `(ρ, ρu, E)` of one cell.
    pub fn conserved(&self, g: &[f64], h: &[f64]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for ((&gj, &hj), &v) in g.iter().zip(h).zip(&self.grid.nodes) {
            acc[0] += gj;
            acc[1] += v * gj;
            acc[2] += 0.5 * v * v * gj + hj;
        }
        acc.map(|a| a * self.grid.dv)
    }

    fn primitive(&self, c: [f64; 3]) -> (f64, f64, f64) {
        let u = c[1] / c[0];
        let theta = (2.0 * c[2] - c[1] * u) / (self.config.dim as f64 * c[0]);
        (c[0], u, theta)
    }

    pub fn cell_moments(&self, g: &[f64], h: &[f64]) -> DvmMoments {
        let (rho, u, theta) = self.primitive(self.conserved(g, h));
        let (mut p11, mut q1) = (0.0, 0.0);
        for ((&gj, &hj), &v) in g.iter().zip(h).zip(&self.grid.nodes) {
            let c = v - u;
            p11 += c * c * gj;
            q1 += c * (0.5 * c * c * gj + hj);
        }
        let dv = self.grid.dv;
        DvmMoments { rho, u, theta, sigma11: p11 * dv - rho * theta, q1: q1 * dv }
    }

    pub fn moments(&self, st: &ReducedState) -> Vec<DvmMoments> {
        (0..st.cells()).map(|i| self.cell_moments(st.g(i), st.h(i))).collect()
    }

    pub fn profile(&self, st: &ReducedState) -> Vec<ProfileRow> {
        self.moments(st)
            .iter()
            .enumerate()
            .map(|(i, m)| ProfileRow { x: self.config.cell_center(i), rho: m.rho, u1: m.u, theta: m.theta, sigma11: m.sigma11, q1: m.q1 })
            .collect()
    }

    pub fn stable_dt(&self) -> f64 {
        self.config.cfl * self.config.dx() / self.grid.v_max()
    }

    /// Totals of `ρ`, `ρu`, `E` over the domain.
    pub fn totals(&self, st: &ReducedState) -> [f64; 3] {
        let dx = self.config.dx();
        let mut acc = [0.0; 3];
        for i in 0..st.cells() {
            let c = self.conserved(st.g(i), st.h(i));
            for k in 0..3 {
                acc[k] += c[k] * dx;
            }
        }
        acc
    }

    pub fn step(&self, st: &mut ReducedState, max_dt: Option<f64>) -> Result<f64> {
        let n = st.cells();
        let nv = st.nv;
        let mut dt = self.stable_dt();
        if let Some(m) = max_dt {
            dt = dt.min(m);
        }
        let ratio = dt / self.config.dx();
        let periodic = self.config.boundary == BoundaryKind::Periodic;
        let mut g = st.g.clone();
        let mut h = st.h.clone();
        for (src, dst, ghost) in [(&st.g, &mut g, 0usize), (&st.h, &mut h, 1)] {
            for i in 0..n {
                let left: &[f64] = if i > 0 {
                    &src[(i - 1) * nv..i * nv]
                } else if periodic {
                    &src[(n - 1) * nv..n * nv]
                } else {
                    let gh = &self.ghosts.as_ref().expect("far-field ghosts")[0];
                    if ghost == 0 {
                        &gh.0
                    } else {
                        &gh.1
                    }
                };
                let right: &[f64] = if i + 1 < n {
                    &src[(i + 1) * nv..(i + 2) * nv]
                } else if periodic {
                    &src[0..nv]
                } else {
                    let gh = &self.ghosts.as_ref().expect("far-field ghosts")[1];
                    if ghost == 0 {
                        &gh.0
                    } else {
                        &gh.1
                    }
                };
                let own = &src[i * nv..(i + 1) * nv];
                let out = &mut dst[i * nv..(i + 1) * nv];
                for j in 0..nv {
                    let v = self.grid.nodes[j];
                    let diff = if v > 0.0 { own[j] - left[j] } else { right[j] - own[j] };
                    out[j] = own[j] - ratio * v * diff;
                }
            }
        }
        if self.config.kn.is_finite() {
            let mut eg = vec![0.0; nv];
            let mut eh = vec![0.0; nv];
            for i in 0..n {
                let (gi, hi) = (&mut g[i * nv..(i + 1) * nv], &mut h[i * nv..(i + 1) * nv]);
                let (rho, u, theta) = self.primitive(self.conserved(gi, hi));
                if !(rho > 0.0 && theta > 0.0) || !u.is_finite() {
                    return Err(Error::Breakdown { cell: i, time: st.time, reason: format!("rho={rho}, theta={theta}") });
                }
                self.equilibrium_into(rho, u, theta, &mut eg, &mut eh)?;
                let decay = (-dt / self.config.tau_model.tau(self.config.kn, rho, theta)).exp();
                for j in 0..nv {
                    gi[j] = eg[j] + (gi[j] - eg[j]) * decay;
                    hi[j] = eh[j] + (hi[j] - eh[j]) * decay;
                }
            }
        }
        st.g = g;
        st.h = h;
        st.time += dt;
        st.steps += 1;
        Ok(dt)
    }

    pub fn run(&self, st: &mut ReducedState, stop: StopCriterion) -> Result<RunReport> {
        let mut history = Vec::new();
        let advance = |st: &mut ReducedState, target: f64, history: &mut Vec<f64>| -> Result<()> {
            while target - st.time > 1e-12 * target.abs().max(1.0) {
                history.push(self.step(st, Some(target - st.time))?);
            }
            Ok(())
        };
        match stop {
            StopCriterion::Time(t) => {
                advance(st, t, &mut history)?;
                Ok(RunReport { dt_history: history, steps: st.steps, final_time: st.time, converged: None, residual: None })
            }
            StopCriterion::Steady { tolerance, check_interval, max_time } => {
                let dx = self.config.dx();
                loop {
                    let before: Vec<f64> = self.moments(st).iter().map(|m| m.rho).collect();
                    let t0 = st.time;
                    advance(st, (t0 + check_interval).min(max_time), &mut history)?;
                    let span = st.time - t0;
                    let residual = if span > 0.0 {
                        before.iter().zip(self.moments(st)).map(|(b, m)| (m.rho - b).abs()).sum::<f64>() * dx / span
                    } else {
                        f64::INFINITY
                    };
                    let converged = residual < tolerance;
                    if converged || st.time >= max_time * (1.0 - 1e-12) || span <= 0.0 {
                        return Ok(RunReport {
                            dt_history: history,
                            steps: st.steps,
                            final_time: st.time,
                            converged: Some(converged),
                            residual: Some(residual),
                        });
                    }
                }
            }
        }
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..3 {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::basis_factor;
    use crate::moments::{stress_heat, MomentCoeffs};
    use crate::multi_index::{MomentLayout, MultiIndex};
    use crate::scenarios::{shock_tube, RunConfig};
    use approx::assert_relative_eq;

    fn periodic(cells: usize, dim: usize, kn: f64) -> DvmConfig {
        DvmConfig { cells, x_lo: 0.0, x_hi: 1.0, dim, kn, tau_model: TauModel::KnOverRho, boundary: BoundaryKind::Periodic, cfl: 0.9 }
    }

    #[test]
    fn grid_is_symmetric() {
        let g = VelocityGrid::new(200, 12.0).unwrap();
        for j in 0..200 {
            assert!((g.nodes()[j] + g.nodes()[199 - j]).abs() < 1e-13);
        }
        assert!(g.covers(1.0, 0.0));
        assert!(!g.covers(10.0, 0.0));
        assert!(VelocityGrid::new(3, 1.0).is_err());
    }

    #[test]
    fn discrete_maxwellian_moments() {
        let s = DvmSolver::new(periodic(4, 3, 0.1), VelocityGrid::new(200, 12.0).unwrap(), None).unwrap();
        let (g, h) = s.equilibrium(7.0, 0.0, 1.0).unwrap();
        let m = s.cell_moments(&g, &h);
        assert_relative_eq!(m.rho, 7.0, epsilon = 1e-10);
        assert_relative_eq!(m.theta, 1.0, epsilon = 1e-10);
        assert!(m.u.abs() < 1e-10);
        let (g, h) = s.equilibrium(1.3, 0.7, 2.1).unwrap();
        let m = s.cell_moments(&g, &h);
        assert!(m.sigma11.abs() < 1e-8 && m.q1.abs() < 1e-8, "{m:?}");
        assert_relative_eq!(m.u, 0.7, epsilon = 1e-12);
        assert_relative_eq!(m.theta, 2.1, epsilon = 1e-12);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn corrected_maxwellian_conserves(rho in 0.05f64..20.0, u in -3.0f64..3.0, theta in 0.2f64..4.0, dim in 1usize..=3) {
            let s = DvmSolver::new(periodic(4, dim, 0.1), VelocityGrid::new(200, 12.0).unwrap(), None).unwrap();
            let (g, h) = s.equilibrium(rho, u, theta).unwrap();
            let c = s.conserved(&g, &h);
            let energy = 0.5 * rho * u * u + 0.5 * dim as f64 * rho * theta;
            proptest::prop_assert!((c[0] - rho).abs() <= 1e-12 * rho);
            proptest::prop_assert!((c[1] - rho * u).abs() <= 1e-12 * rho * (1.0 + u.abs()));
            proptest::prop_assert!((c[2] - energy).abs() <= 1e-12 * energy);
        }
    }

    #[test]
    fn equilibrium_is_invariant() {
        for dim in [1, 3] {
            let s = DvmSolver::new(periodic(10, dim, 0.1), VelocityGrid::new(64, 10.0).unwrap(), None).unwrap();
            let mut st = s.equilibrium_state(|_| MacroState::one_d(1.2, 0.3, 0.8, dim)).unwrap();
            let init = st.clone();
            for _ in 0..20 {
                s.step(&mut st, None).unwrap();
            }
            for (a, b) in st.g.iter().zip(&init.g).chain(st.h.iter().zip(&init.h)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn free_transport_moves_centroid() {
        let s = DvmSolver::new(periodic(200, 1, f64::INFINITY), VelocityGrid::new(9, 1.0).unwrap(), None).unwrap();
        let nv = 9;
        let j = 6; // velocity 0.5
        let v = s.grid().nodes()[j];
        let mut g = vec![0.0; 200 * nv];
        for i in 0..200 {
            let x = s.config().cell_center(i);
            if (x - 0.3).abs() < 0.05 {
                g[i * nv + j] = (1.0 + ((x - 0.3) / 0.05 * std::f64::consts::PI).cos()) * 0.5;
            }
        }
        let mut st = ReducedState::from_parts(nv, g, vec![0.0; 200 * nv]).unwrap();
        s.run(&mut st, StopCriterion::Time(0.8)).unwrap();
        let (mut mass, mut first) = (0.0, 0.0);
        for i in 0..200 {
            let w = st.g(i)[j];
            mass += w;
            first += w * s.config().cell_center(i);
        }
        let centroid = first / mass;
        assert!((centroid - (0.3 + v * 0.8)).abs() < s.config().dx(), "centroid {centroid}");
    }

    #[test]
    fn periodic_conservation() {
        let s = DvmSolver::new(periodic(50, 3, 0.05), VelocityGrid::new(48, 8.0).unwrap(), None).unwrap();
        let mut st = s
            .equilibrium_state(|x| {
                MacroState::one_d(
                    1.0 + 0.3 * (std::f64::consts::TAU * x).sin(),
                    0.2 * (std::f64::consts::TAU * x).cos(),
                    1.0 + 0.2 * (std::f64::consts::TAU * x).sin(),
                    3,
                )
            })
            .unwrap();
        let mut prev = s.totals(&st);
        for _ in 0..40 {
            s.step(&mut st, None).unwrap();
            let now = s.totals(&st);
            for k in 0..3 {
                assert!((now[k] - prev[k]).abs() < 1e-13 * prev[k].abs().max(1.0), "{k}");
            }
            prev = now;
        }
    }

    #[test]
    fn reduced_moments_match_hermite_coefficients() {
        // f with coefficients on (n,0,0), (n,2,0), (n,0,2); reduce analytically
        let layout = MomentLayout::new(4, 3).unwrap();
        let frame = MacroState::one_d(1.4, 0.3, 1.2, 3).unwrap();
        let mut c = MomentCoeffs::zeros(&layout);
        c[0] = 1.4;
        let set = |c: &mut MomentCoeffs<f64>, a: [usize; 3], v: f64| {
            let k = layout.ordinal(&MultiIndex::new(&a).unwrap()).unwrap();
            c[k] = v;
        };
        set(&mut c, [2, 0, 0], 0.08);
        set(&mut c, [0, 2, 0], -0.05);
        set(&mut c, [0, 0, 2], -0.03);
        set(&mut c, [3, 0, 0], 0.04);
        set(&mut c, [1, 2, 0], -0.02);
        set(&mut c, [1, 0, 2], 0.01);
        set(&mut c, [4, 0, 0], 0.01);
        set(&mut c, [2, 2, 0], 0.005);
        let get = |a: [usize; 3]| c[layout.ordinal(&MultiIndex::new(&a).unwrap()).unwrap()];
        let th = frame.theta();
        let grid = VelocityGrid::new(400, 12.0).unwrap();
        let s = DvmSolver::new(periodic(4, 3, 0.1), grid, None).unwrap();
        let (mut g, mut h) = (Vec::new(), Vec::new());
        for &xi in s.grid().nodes() {
            let v = (xi - frame.u1()) / th.sqrt();
            let (mut gv, mut hv) = (0.0, 0.0);
            for n in 0..=4usize {
                let b = basis_factor(th, n as i64, v);
                gv += get([n, 0, 0]) * b;
                if n <= 2 {
                    hv += (th * get([n, 0, 0]) + get([n, 2, 0]) + get([n, 0, 2])) * b;
                }
            }
            g.push(gv);
            h.push(hv);
        }
        let m = s.cell_moments(&g, &h);
        let sh = stress_heat(&c, &frame, &layout);
        assert_relative_eq!(m.rho, 1.4, epsilon = 1e-10);
        assert_relative_eq!(m.u, 0.3, epsilon = 1e-10);
        assert_relative_eq!(m.theta, 1.2, epsilon = 1e-10);
        assert_relative_eq!(m.sigma11, sh.sigma[0][0], epsilon = 1e-10);
        assert_relative_eq!(m.q1, sh.q[0], epsilon = 1e-10);
    }

    #[test]
    fn shock_tube_initialisation() {
        let settings = RunConfig { kn: Some(0.02), ..Default::default() }.resolve().unwrap();
        let (s, st) = DvmSolver::for_scenario(&settings, 100, REFERENCE_VELOCITIES, REFERENCE_VMAX).unwrap();
        let m = s.moments(&st);
        assert_relative_eq!(m[0].rho, 7.0, epsilon = 1e-10);
        assert_relative_eq!(m[0].theta, 1.0, epsilon = 1e-10);
        let total = s.totals(&st)[0];
        assert_relative_eq!(total, 8.5, epsilon = 1e-10);
        assert_eq!(shock_tube(0.02).stop, StopCriterion::Time(0.3));
    }
}
