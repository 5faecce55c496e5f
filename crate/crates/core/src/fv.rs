//! Finite-volume solver for the regularized moment system in one space
//! dimension.
//!
//! Each cell stores its coefficients in its own frame `(u_i, θ_i)`. A step
//! consists of
//! 1. a local Lax–Friedrichs flux evaluated in the frame averaged across each
//!    interface and projected back into the neighbouring cell frames, with
//!    face values optionally reconstructed from limited slopes,
//! 2. an implicit diffusion solve for the highest-order coefficients, which
//!    carries the regularization term `(α_1+1) ∂_x f_{α+e_1}`,
//! 3. a move into the frame of the updated conserved quantities followed by
//!    exponential relaxation of every coefficient with `|α| ≥ 2`.

use crate::closure::{nonlinear_source, ClosureKind};
use crate::error::{Error, Result};
use crate::hermite::largest_root;
use crate::moments::{
    conserved, enforce_constraints, macro_from_conserved, maxwellian_coeffs, project_in_place, stress_heat, MacroState, MomentCoeffs,
};
use crate::multi_index::{MomentLayout, MultiIndex};
use crate::scalar::Real;
use crate::scenarios::{BoundaryKind, RunSettings, Scenario, StopCriterion, TauModel};
use serde::{Deserialize, Serialize};

/// Face values used by the hyperbolic flux.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    /// Cell averages.
    FirstOrder,
    /// Linear reconstruction in each cell frame with van Leer limited slopes.
    #[default]
    VanLeer,
}

impl std::str::FromStr for Reconstruction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-order" => Ok(Reconstruction::FirstOrder),
            "van-leer" => Ok(Reconstruction::VanLeer),
            other => Err(Error::InvalidConfig(format!("unknown reconstruction '{other}' (expected first-order or van-leer)"))),
        }
    }
}

impl std::fmt::Display for Reconstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reconstruction::FirstOrder => "first-order",
            Reconstruction::VanLeer => "van-leer",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_order: usize,
    pub dim: usize,
    pub cells: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub cfl: f64,
    pub kn: f64,
    pub tau_model: TauModel,
    pub closure: ClosureKind,
    pub boundary: BoundaryKind,
    pub reconstruction: Reconstruction,
}

impl SolverConfig {
    pub fn from_settings(s: &RunSettings) -> Self {
        let sc = &s.scenario;
        SolverConfig {
            max_order: s.max_order,
            dim: sc.dim,
            cells: s.cells,
            x_lo: sc.x_lo,
            x_hi: sc.x_hi,
            cfl: s.cfl,
            kn: sc.kn,
            tau_model: sc.tau_model,
            closure: s.closure,
            boundary: sc.boundary,
            reconstruction: s.reconstruction,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.cells as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    fn validate(&self) -> Result<()> {
        if self.max_order < 3 {
            return Err(Error::InvalidConfig(format!("moment order M must be at least 3 (got {})", self.max_order)));
        }
        if self.cells < 4 {
            return Err(Error::InvalidConfig(format!("need at least 4 cells (got {})", self.cells)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidConfig(format!("CFL number must lie in (0, 1] (got {})", self.cfl)));
        }
        if !(self.kn > 0.0 && self.kn.is_finite()) {
            return Err(Error::InvalidConfig(format!("Kn must be positive and finite (got {})", self.kn)));
        }
        if !(self.x_hi > self.x_lo) {
            return Err(Error::InvalidConfig("domain must satisfy x_lo < x_hi".into()));
        }
        Ok(())
    }
}

/// Cell frames and coefficients at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState<T> {
    frames: Vec<MacroState<T>>,
    coeffs: Vec<T>,
    stride: usize,
    pub time: T,
    pub steps: usize,
    /// Time-integrated mass, momentum and energy that entered through the
    /// domain ends (zero for periodic domains).
    pub boundary_inflow: [T; 3],
}

impl<T: Real> SimState<T> {
    pub fn cells(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, i: usize) -> &MacroState<T> {
        &self.frames[i]
    }

    pub fn coeffs(&self, i: usize) -> &[T] {
        &self.coeffs[i * self.stride..(i + 1) * self.stride]
    }

    /// Integrals of `ρ`, `ρu_1` and `E` over the domain.
    pub fn totals(&self, layout: &MomentLayout, dx: T) -> [T; 3] {
        let mut acc = [T::zero(); 3];
        for i in 0..self.cells() {
            let c = conserved(self.coeffs(i), self.frames[i].u(), self.frames[i].theta(), layout);
            acc[0] += c.rho * dx;
            acc[1] += c.momentum[0] * dx;
            acc[2] += c.energy * dx;
        }
        acc
    }
}

/// One row of a macroscopic profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileRow {
    pub x: f64,
    pub rho: f64,
    pub u1: f64,
    pub theta: f64,
    pub sigma11: f64,
    pub q1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub dt_history: Vec<f64>,
    pub steps: usize,
    pub final_time: f64,
    /// For steady runs: whether the residual dropped below the tolerance.
    pub converged: Option<bool>,
    pub residual: Option<f64>,
}

/// Flux coefficients of `ξ_1 f` in the frame `(u, θ)`:
/// `F_α = θ f_{α-e_1} + u_1 f_α + (α_1+1) f_{α+e_1}`. The coefficients of order
/// `M + 1` needed for `|α| = M` are read from `top`, indexed like the top
/// grade of the layout; `None` drops them.
pub fn flux_coefficients<T: Real>(f: &[T], u1: T, theta: T, layout: &MomentLayout, top: Option<&[T]>, out: &mut [T]) {
    let top_start = layout.grade(layout.max_order()).start;
    for k in 0..layout.len() {
        let a1 = layout.indices()[k].get(0);
        let mut v = u1 * f[k];
        if let Some(j) = layout.down(k, 0) {
            v += theta * f[j];
        }
        match layout.up(k, 0) {
            Some(j) => v += T::from_count(a1 + 1) * f[j],
            None => {
                if let Some(t) = top {
                    v += T::from_count(a1 + 1) * t[k - top_start];
                }
            }
        }
        out[k] = v;
    }
}

/// Solves a tridiagonal system in place. `a[0]` and `c[n-1]` are ignored.
pub fn solve_tridiagonal<T: Real>(a: &[T], b: &[T], c: &[T], rhs: &mut [T]) {
    let n = rhs.len();
    let mut cp = vec![T::zero(); n];
    let mut beta = b[0];
    rhs[0] /= beta;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i - 1];
        rhs[i] = (rhs[i] - a[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= cp[i] * next;
    }
}

/// Solves a cyclic tridiagonal system (`a[0]` couples to `x[n-1]`, `c[n-1]`
/// to `x[0]`) with the Sherman–Morrison formula.
pub fn solve_cyclic<T: Real>(a: &[T], b: &[T], c: &[T], rhs: &mut [T]) {
    let n = rhs.len();
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - c[n - 1] * a[0] / gamma;
    solve_tridiagonal(a, &bb, c, rhs);
    let mut z = vec![T::zero(); n];
    z[0] = gamma;
    z[n - 1] = c[n - 1];
    solve_tridiagonal(a, &bb, c, &mut z);
    let num = rhs[0] + a[0] * rhs[n - 1] / gamma;
    let den = T::one() + z[0] + a[0] * z[n - 1] / gamma;
    let factor = num / den;
    for (x, zz) in rhs.iter_mut().zip(&z) {
        *x -= factor * *zz;
    }
}

// Quantities evaluated at one cell interface.
struct Interface<T> {
    frame: MacroState<T>,
    flux: Vec<T>,
    lambda: T,
    // top-grade coefficients of the left/right neighbours projected into the frame
    top_left: Vec<T>,
    top_right: Vec<T>,
    // gradient-free part of the nonlinear closure flux, per top index
    source: Vec<T>,
}

pub struct Solver<T> {
    config: SolverConfig,
    layout: MomentLayout,
    wave: T,
    ghosts: Option<[(MacroState<T>, Vec<T>); 2]>,
    scratch: Vec<T>,
}

impl<T: Real> Solver<T> {
    /// `ghosts` holds the far-field equilibria and is ignored for periodic domains.
    pub fn new(config: SolverConfig, ghosts: Option<(MacroState<T>, MacroState<T>)>) -> Result<Self> {
        config.validate()?;
        let layout = MomentLayout::new(config.max_order, config.dim)?;
        let ghosts = match (config.boundary, ghosts) {
            (BoundaryKind::Periodic, _) => None,
            (BoundaryKind::FarField, Some((l, r))) => {
                for g in [&l, &r] {
                    if g.dim() != config.dim {
                        return Err(Error::DimensionMismatch { expected: config.dim, got: g.dim() });
                    }
                }
                let (cl, cr) = (maxwellian_coeffs(&l, &layout).into_vec(), maxwellian_coeffs(&r, &layout).into_vec());
                Some([(l, cl), (r, cr)])
            }
            (BoundaryKind::FarField, None) => return Err(Error::InvalidConfig("far-field boundaries need ghost states".into())),
        };
        Ok(Solver { wave: largest_root(config.max_order + 1), config, layout, ghosts, scratch: Vec::new() })
    }

    /// Solver and equilibrium initial state for a scenario.
    pub fn for_scenario(settings: &RunSettings) -> Result<(Self, SimState<T>)> {
        let config = SolverConfig::from_settings(settings);
        let sc: &Scenario = &settings.scenario;
        let ghosts = match sc.far_field() {
            Some((l, r)) => Some((l.to_macro(sc.dim)?, r.to_macro(sc.dim)?)),
            None => None,
        };
        let solver = Solver::new(config, ghosts)?;
        let state = solver.equilibrium_state(|x| sc.initial_state(x))?;
        Ok((solver, state))
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn layout(&self) -> &MomentLayout {
        &self.layout
    }

    pub fn dx(&self) -> T {
        T::lit(self.config.dx())
    }

    /// Largest characteristic speed factor `c_{M+1}`.
    pub fn wave_factor(&self) -> T {
        self.wave
    }

    pub fn equilibrium_state(&self, init: impl Fn(f64) -> Result<MacroState<T>>) -> Result<SimState<T>> {
        self.state_from_fn(|x| {
            let m = init(x)?;
            let c = maxwellian_coeffs(&m, &self.layout).into_vec();
            Ok((m, c))
        })
    }

    /// Builds a state from per-cell frames and coefficients; the constraints
    /// are enforced on the given coefficients.
    pub fn state_from_fn(&self, init: impl Fn(f64) -> Result<(MacroState<T>, Vec<T>)>) -> Result<SimState<T>> {
        let l = self.layout.len();
        let mut frames = Vec::with_capacity(self.config.cells);
        let mut coeffs = Vec::with_capacity(self.config.cells * l);
        for i in 0..self.config.cells {
            let (m, mut c) = init(self.config.cell_center(i))?;
            if m.dim() != self.config.dim {
                return Err(Error::DimensionMismatch { expected: self.config.dim, got: m.dim() });
            }
            if c.len() != l {
                return Err(Error::DimensionMismatch { expected: l, got: c.len() });
            }
            enforce_constraints(&mut c, m.rho(), &self.layout);
            frames.push(m);
            coeffs.extend(c);
        }
        Ok(SimState { frames, coeffs, stride: l, time: T::zero(), steps: 0, boundary_inflow: [T::zero(); 3] })
    }

    pub fn tau(&self, rho: T, theta: T) -> T {
        self.config.tau_model.tau(T::lit(self.config.kn), rho, theta)
    }

    fn speed(&self, m: &MacroState<T>) -> T {
        m.u1().abs() + self.wave * m.theta().sqrt()
    }

    /// Largest stable time step for the current state.
    pub fn stable_dt(&self, st: &SimState<T>) -> T {
        let mut lam = st.frames.iter().map(|m| self.speed(m)).fold(T::zero(), T::max);
        if let Some(g) = &self.ghosts {
            lam = lam.max(self.speed(&g[0].0)).max(self.speed(&g[1].0));
        }
        T::lit(self.config.cfl) * self.dx() / lam
    }

    fn interface_count(&self) -> usize {
        match self.config.boundary {
            BoundaryKind::Periodic => self.config.cells,
            BoundaryKind::FarField => self.config.cells + 1,
        }
    }

    // Neighbours of interface `k` (between cells k-1 and k) as frame and coefficients.
    fn sides<'a>(&'a self, st: &'a SimState<T>, k: usize) -> [(&'a MacroState<T>, &'a [T], bool); 2] {
        let n = self.config.cells;
        let left = if k > 0 {
            (&st.frames[k - 1], st.coeffs(k - 1), false)
        } else {
            match &self.ghosts {
                Some(g) => (&g[0].0, g[0].1.as_slice(), true),
                None => (&st.frames[n - 1], st.coeffs(n - 1), false),
            }
        };
        let right = if k < n {
            (&st.frames[k], st.coeffs(k), false)
        } else {
            match &self.ghosts {
                Some(g) => (&g[1].0, g[1].1.as_slice(), true),
                None => (&st.frames[0], st.coeffs(0), false),
            }
        };
        [left, right]
    }

    // Half slopes of every cell in its own frame, limited per coefficient.
    fn half_slopes(&mut self, st: &SimState<T>) -> Option<Vec<T>> {
        if self.config.reconstruction == Reconstruction::FirstOrder {
            return None;
        }
        let n = self.config.cells;
        let l = self.layout.len();
        let half = T::lit(0.5);
        let mut out = vec![T::zero(); n * l];
        let mut scratch = std::mem::take(&mut self.scratch);
        let (mut lp, mut rp) = (Vec::with_capacity(l), Vec::with_capacity(l));
        for i in 0..n {
            let m = &st.frames[i];
            let [(ml, fl, _), _] = self.sides(st, i);
            let [_, (mr, fr, _)] = self.sides(st, i + 1);
            lp.clear();
            lp.extend_from_slice(fl);
            rp.clear();
            rp.extend_from_slice(fr);
            let dul: Vec<T> = ml.u().iter().zip(m.u()).map(|(&a, &b)| a - b).collect();
            let dur: Vec<T> = mr.u().iter().zip(m.u()).map(|(&a, &b)| a - b).collect();
            project_in_place(&mut lp, &self.layout, &dul, ml.theta() - m.theta(), &mut scratch);
            project_in_place(&mut rp, &self.layout, &dur, mr.theta() - m.theta(), &mut scratch);
            let f = st.coeffs(i);
            for k in 0..l {
                out[i * l + k] = half * van_leer(f[k] - lp[k], rp[k] - f[k]);
            }
        }
        self.scratch = scratch;
        Some(out)
    }

    fn interface(&mut self, st: &SimState<T>, k: usize, slopes: Option<&[T]>) -> Result<Interface<T>> {
        let layout = &self.layout;
        let dim = layout.dim();
        let half = T::lit(0.5);
        let [(ml, fl, gl), (mr, fr, gr)] = self.sides(st, k);
        let u: Vec<T> = ml.u().iter().zip(mr.u()).map(|(&a, &b)| half * (a + b)).collect();
        let frame = MacroState::new(half * (ml.rho() + mr.rho()), &u, half * (ml.theta() + mr.theta()))?;
        let mut pl = fl.to_vec();
        let mut pr = fr.to_vec();
        let dul: Vec<T> = (0..dim).map(|d| ml.u()[d] - u[d]).collect();
        let dur: Vec<T> = (0..dim).map(|d| mr.u()[d] - u[d]).collect();
        let mut scratch = Vec::new();
        project_in_place(&mut pl, layout, &dul, ml.theta() - frame.theta(), &mut scratch);
        project_in_place(&mut pr, layout, &dur, mr.theta() - frame.theta(), &mut scratch);
        let lambda = self.speed(ml).max(self.speed(mr)).max(self.speed(&frame));
        let n = layout.len();
        // reconstructed face states, in the interface frame
        let (mut sl, mut sr) = (pl.clone(), pr.clone());
        if let Some(hs) = slopes {
            let cells = self.config.cells;
            let (il, ir) = ((k + cells - 1) % cells, k % cells);
            if !gl {
                let mut d = hs[il * n..(il + 1) * n].to_vec();
                project_in_place(&mut d, layout, &dul, ml.theta() - frame.theta(), &mut scratch);
                for (a, b) in sl.iter_mut().zip(&d) {
                    *a += *b;
                }
            }
            if !gr {
                let mut d = hs[ir * n..(ir + 1) * n].to_vec();
                project_in_place(&mut d, layout, &dur, mr.theta() - frame.theta(), &mut scratch);
                for (a, b) in sr.iter_mut().zip(&d) {
                    *a -= *b;
                }
            }
        }
        let mut flux = vec![T::zero(); n];
        let mut tmp = vec![T::zero(); n];
        flux_coefficients(&sl, frame.u1(), frame.theta(), layout, None, &mut flux);
        flux_coefficients(&sr, frame.u1(), frame.theta(), layout, None, &mut tmp);
        for i in 0..n {
            flux[i] = half * (flux[i] + tmp[i]) - half * lambda * (sr[i] - sl[i]);
        }
        let top = layout.grade(layout.max_order());
        let source = match self.config.closure {
            ClosureKind::Linear => Vec::new(),
            ClosureKind::Nonlinear => {
                let avg: Vec<T> = pl.iter().zip(&pr).map(|(&a, &b)| half * (a + b)).collect();
                let avg = MomentCoeffs::from_vec(layout, avg)?;
                let mut out = Vec::with_capacity(top.len());
                for kk in top.clone() {
                    let alpha = &layout.indices()[kk];
                    let beta = alpha.shift(0, 1).expect("raising an index");
                    out.push(T::from_count(alpha.get(0) + 1) * nonlinear_source(&beta, &frame, &avg, layout)?);
                }
                out
            }
        };
        Ok(Interface { top_left: pl[top.clone()].to_vec(), top_right: pr[top].to_vec(), frame, flux, lambda, source })
    }

    fn faces(&mut self, st: &SimState<T>) -> Result<Vec<Interface<T>>> {
        let slopes = self.half_slopes(st);
        (0..self.interface_count()).map(|k| self.interface(st, k, slopes.as_deref())).collect()
    }

    // Transport increment `f* - f` over `dt` (hyperbolic flux plus implicit
    // regularization) in the cell frames, and the net boundary inflow.
    fn transport(&mut self, st: &SimState<T>, faces: &[Interface<T>], dt: T) -> Result<(Vec<T>, [T; 3])> {
        let n = self.config.cells;
        let l = self.layout.len();
        let dim = self.layout.dim();
        let periodic = self.config.boundary == BoundaryKind::Periodic;
        let face = |k: usize| if periodic { &faces[k % n] } else { &faces[k] };
        let ratio = dt / self.dx();

        let mut next = st.coeffs.clone();
        let mut buf = Vec::with_capacity(l);
        for i in 0..n {
            let (m, row) = (&st.frames[i], &mut next[i * l..(i + 1) * l]);
            for (k, sign) in [(i, ratio), (i + 1, -ratio)] {
                let f = face(k);
                buf.clear();
                buf.extend_from_slice(&f.flux);
                let du: Vec<T> = (0..dim).map(|d| f.frame.u()[d] - m.u()[d]).collect();
                project_in_place(&mut buf, &self.layout, &du, f.frame.theta() - m.theta(), &mut self.scratch);
                for (x, v) in row.iter_mut().zip(&buf) {
                    *x += sign * *v;
                }
            }
        }
        let mut inflow = [T::zero(); 3];
        if !periodic {
            for (k, sign) in [(0, T::one()), (n, -T::one())] {
                let f = &faces[k];
                let c = conserved(&f.flux, f.frame.u(), f.frame.theta(), &self.layout);
                inflow[0] += sign * dt * c.rho;
                inflow[1] += sign * dt * c.momentum[0];
                inflow[2] += sign * dt * c.energy;
            }
        }
        self.regularize(st, faces, &mut next, dt)?;
        for (x, &f) in next.iter_mut().zip(&st.coeffs) {
            *x -= f;
        }
        Ok((next, inflow))
    }

    /// Advances by one step of at most `max_dt`; returns the step taken.
    ///
    /// Two-stage exponential Runge–Kutta: the predictor relaxes with the
    /// transport of the current state, the corrector adds `φ_2(h)` times the
    /// change of transport between the predicted and the current state. For
    /// `h = dt/τ → 0` this is Heun's method, for `h → ∞` the non-equilibrium
    /// coefficients balance the transport at the new time level.
    pub fn step(&mut self, st: &mut SimState<T>, max_dt: Option<T>) -> Result<T> {
        let n = self.config.cells;
        let l = self.layout.len();
        let dim = self.layout.dim();
        let half = T::lit(0.5);
        let first = self.layout.grade(2).start;

        let faces = self.faces(st)?;
        let lam = faces.iter().map(|f| f.lambda).fold(T::zero(), T::max);
        let mut dt = T::lit(self.config.cfl) * self.dx() / lam;
        if let Some(m) = max_dt {
            dt = dt.min(m);
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(self.breakdown(0, st, "non-positive time step"));
        }
        let (inc0, in0) = self.transport(st, &faces, dt)?;

        // predictor
        let mut pred = st.clone();
        let mut old = Vec::with_capacity(l);
        let mut row = Vec::with_capacity(l);
        for i in 0..n {
            let m = &st.frames[i];
            row.clear();
            row.extend(st.coeffs(i).iter().zip(&inc0[i * l..(i + 1) * l]).map(|(&a, &b)| a + b));
            let c = conserved(&row, m.u(), m.theta(), &self.layout);
            let target = macro_from_conserved(c.rho, &c.momentum[..dim], c.energy).map_err(|e| self.breakdown(i, st, &e.to_string()))?;
            self.move_frame(&mut row, m, &target);
            old.clear();
            old.extend_from_slice(st.coeffs(i));
            self.move_frame(&mut old, m, &target);
            let h = dt / self.tau(target.rho(), target.theta());
            let (decay, phi1) = ((-h).exp(), phi1(h));
            for k in first..l {
                row[k] = decay * old[k] + phi1 * (row[k] - old[k]);
            }
            enforce_constraints(&mut row, target.rho(), &self.layout);
            self.check_finite(&row, i, st)?;
            pred.coeffs[i * l..(i + 1) * l].copy_from_slice(&row);
            pred.frames[i] = target;
        }

        // corrector
        let faces1 = self.faces(&pred)?;
        let (inc1, in1) = self.transport(&pred, &faces1, dt)?;
        let mut next = pred.coeffs.clone();
        let (mut d0, mut d1) = (Vec::with_capacity(l), Vec::with_capacity(l));
        for i in 0..n {
            let (m0, m1) = (&st.frames[i], &pred.frames[i]);
            d0.clear();
            d0.extend_from_slice(&inc0[i * l..(i + 1) * l]);
            d1.clear();
            d1.extend_from_slice(&inc1[i * l..(i + 1) * l]);
            let c1 = conserved(pred.coeffs(i), m1.u(), m1.theta(), &self.layout);
            let e1 = conserved(&d1, m1.u(), m1.theta(), &self.layout);
            let e0 = conserved(&d0, m0.u(), m0.theta(), &self.layout);
            let rho = c1.rho + half * (e1.rho - e0.rho);
            let mom: Vec<T> = (0..dim).map(|d| c1.momentum[d] + half * (e1.momentum[d] - e0.momentum[d])).collect();
            let energy = c1.energy + half * (e1.energy - e0.energy);
            let target = macro_from_conserved(rho, &mom, energy).map_err(|e| self.breakdown(i, &pred, &e.to_string()))?;
            let row = &mut next[i * l..(i + 1) * l];
            self.move_frame(row, m1, &target);
            self.move_frame(&mut d1, m1, &target);
            self.move_frame(&mut d0, m0, &target);
            let phi2 = phi2(dt / self.tau(target.rho(), target.theta()));
            for k in first..l {
                row[k] += phi2 * (d1[k] - d0[k]);
            }
            enforce_constraints(row, target.rho(), &self.layout);
            self.check_finite(row, i, &pred)?;
            st.frames[i] = target;
        }
        st.coeffs = next;
        for k in 0..3 {
            st.boundary_inflow[k] += half * (in0[k] + in1[k]);
        }
        st.time += dt;
        st.steps += 1;
        Ok(dt)
    }

    fn move_frame(&mut self, values: &mut [T], from: &MacroState<T>, to: &MacroState<T>) {
        let du: Vec<T> = from.u().iter().zip(to.u()).map(|(&a, &b)| a - b).collect();
        project_in_place(values, &self.layout, &du, from.theta() - to.theta(), &mut self.scratch);
    }

    fn check_finite(&self, row: &[T], cell: usize, st: &SimState<T>) -> Result<()> {
        if row.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(self.breakdown(cell, st, "non-finite coefficient"))
        }
    }

    fn regularize(&self, st: &SimState<T>, faces: &[Interface<T>], next: &mut [T], dt: T) -> Result<()> {
        let n = self.config.cells;
        let l = self.layout.len();
        let dx = self.dx();
        let periodic = self.config.boundary == BoundaryKind::Periodic;
        let nonlinear = self.config.closure == ClosureKind::Nonlinear;
        let r = dt / (dx * dx);
        let top = self.layout.grade(self.layout.max_order());
        let nf = faces.len();

        // per interface: diffusivity τθ, neighbour weights and the side indices
        let mut kappa = Vec::with_capacity(nf);
        let mut weights = Vec::with_capacity(nf);
        for (k, f) in faces.iter().enumerate() {
            let fr = &f.frame;
            kappa.push(self.tau(fr.rho(), fr.theta()) * fr.theta());
            let [(ml, _, _), (mr, _, _)] = self.sides(st, k);
            weights.push(if nonlinear { (fr.pressure() / ml.pressure(), fr.pressure() / mr.pressure()) } else { (T::one(), T::one()) });
        }

        let (mut a, mut b, mut c, mut x) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
        let mut explicit = vec![T::zero(); nf];
        for (t, kk) in top.enumerate() {
            let a1 = T::from_count(self.layout.indices()[kk].get(0) + 1);
            for (k, f) in faces.iter().enumerate() {
                let [(_, fl, _), (_, fr, _)] = self.sides(st, k);
                let (wl, wr) = weights[k];
                let (ol, or) = (f.top_left[t] - fl[kk], f.top_right[t] - fr[kk]);
                let mut e = -a1 * kappa[k] / dx * (wr * or - wl * ol);
                if nonlinear {
                    e += f.source[t];
                }
                explicit[k] = e;
            }
            let fidx = |k: usize| if periodic { k % n } else { k };
            for i in 0..n {
                let (kl, kr) = (fidx(i), fidx(i + 1));
                let (dl, dr) = (a1 * kappa[kl], a1 * kappa[kr]);
                a[i] = -r * dl * weights[kl].0;
                c[i] = -r * dr * weights[kr].1;
                b[i] = T::one() + r * (dr * weights[kr].0 + dl * weights[kl].1);
                x[i] = next[i * l + kk] - dt / dx * (explicit[kr] - explicit[kl]);
            }
            if periodic {
                solve_cyclic(&a, &b, &c, &mut x);
            } else {
                solve_tridiagonal(&a, &b, &c, &mut x);
            }
            for i in 0..n {
                next[i * l + kk] = x[i];
            }
        }
        Ok(())
    }

    fn breakdown(&self, cell: usize, st: &SimState<T>, reason: &str) -> Error {
        Error::Breakdown { cell, time: st.time.to_f64_lossy(), reason: reason.to_string() }
    }

    /// Runs until the stop criterion holds.
    pub fn run(&mut self, st: &mut SimState<T>, stop: StopCriterion) -> Result<RunReport> {
        let mut history = Vec::new();
        match stop {
            StopCriterion::Time(t_end) => {
                let t_end = T::lit(t_end);
                while t_end - st.time > T::lit(1e-12) * t_end.abs().max(T::one()) {
                    history.push(self.step(st, Some(t_end - st.time))?.to_f64_lossy());
                }
                Ok(RunReport { dt_history: history, steps: st.steps, final_time: st.time.to_f64_lossy(), converged: None, residual: None })
            }
            StopCriterion::Steady { tolerance, check_interval, max_time } => {
                let dx = self.config.dx();
                let mut residual = f64::INFINITY;
                loop {
                    let before: Vec<f64> = st.frames.iter().map(|m| m.rho().to_f64_lossy()).collect();
                    let t0 = st.time.to_f64_lossy();
                    let target = T::lit((t0 + check_interval).min(max_time));
                    while target - st.time > T::lit(1e-12) * target.abs().max(T::one()) {
                        history.push(self.step(st, Some(target - st.time))?.to_f64_lossy());
                    }
                    let span = st.time.to_f64_lossy() - t0;
                    if span > 0.0 {
                        residual = before.iter().zip(&st.frames).map(|(&b, m)| (m.rho().to_f64_lossy() - b).abs()).sum::<f64>() * dx / span;
                    }
                    let converged = residual < tolerance;
                    if converged || st.time.to_f64_lossy() >= max_time * (1.0 - 1e-12) || span <= 0.0 {
                        return Ok(RunReport {
                            dt_history: history,
                            steps: st.steps,
                            final_time: st.time.to_f64_lossy(),
                            converged: Some(converged),
                            residual: Some(residual),
                        });
                    }
                }
            }
        }
    }

    /// Macroscopic profile at the cell centres.
    pub fn profile(&self, st: &SimState<T>) -> Vec<ProfileRow> {
        (0..st.cells())
            .map(|i| {
                let m = st.frame(i);
                let coeffs = MomentCoeffs::from_vec(&self.layout, st.coeffs(i).to_vec()).expect("stride matches layout");
                let sh = stress_heat(&coeffs, m, &self.layout);
                ProfileRow {
                    x: self.config.cell_center(i),
                    rho: m.rho().to_f64_lossy(),
                    u1: m.u1().to_f64_lossy(),
                    theta: m.theta().to_f64_lossy(),
                    sigma11: sh.sigma[0][0].to_f64_lossy(),
                    q1: sh.q[0].to_f64_lossy(),
                }
            })
            .collect()
    }

    /// Top-grade regularization flux divergence `-∂_x G` at every cell for the
    /// current state, computed with the same interface quantities as a step.
    pub fn regularization_divergence(&mut self, st: &SimState<T>) -> Result<Vec<Vec<T>>> {
        let n = self.config.cells;
        let faces = self.faces(st)?;
        let dx = self.dx();
        let nonlinear = self.config.closure == ClosureKind::Nonlinear;
        let top = self.layout.grade(self.layout.max_order());
        let mut out = vec![Vec::with_capacity(top.len()); n];
        for (t, kk) in top.enumerate() {
            let a1 = T::from_count(self.layout.indices()[kk].get(0) + 1);
            let flux: Vec<T> = faces
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let [(ml, _, _), (mr, _, _)] = self.sides(st, k);
                    let fr_ = &f.frame;
                    let (wl, wr) = if nonlinear { (fr_.pressure() / ml.pressure(), fr_.pressure() / mr.pressure()) } else { (T::one(), T::one()) };
                    let kappa = a1 * self.tau(fr_.rho(), fr_.theta()) * fr_.theta();
                    let g = -kappa / dx * (wr * f.top_right[t] - wl * f.top_left[t]);
                    if nonlinear {
                        g + f.source[t]
                    } else {
                        g
                    }
                })
                .collect();
            let periodic = self.config.boundary == BoundaryKind::Periodic;
            for (i, row) in out.iter_mut().enumerate() {
                let right = if periodic { (i + 1) % n } else { i + 1 };
                row.push(-(flux[right] - flux[i]) / dx);
            }
        }
        Ok(out)
    }

    /// Top-grade index list, matching the inner vectors of
    /// [`Solver::regularization_divergence`].
    pub fn top_indices(&self) -> Vec<MultiIndex> {
        self.layout.indices()[self.layout.grade(self.layout.max_order())].to_vec()
    }
}

fn van_leer<T: Real>(a: T, b: T) -> T {
    if a * b <= T::zero() {
        T::zero()
    } else {
        T::lit(2.0) * a * b / (a + b)
    }
}

// (1 - e^{-h})/h
fn phi1<T: Real>(h: T) -> T {
    if h > T::lit(1e-8) {
        -(-h).exp_m1() / h
    } else {
        T::one() - T::lit(0.5) * h
    }
}

// (h - 1 + e^{-h})/h²
fn phi2<T: Real>(h: T) -> T {
    if h > T::lit(1e-3) {
        (h + (-h).exp_m1()) / (h * h)
    } else {
        T::lit(0.5) - h / T::lit(6.0) + h * h / T::lit(24.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::constraint_residual;
    use crate::scenarios::{periodic_wave, shock_tube, RunConfig};
    use approx::assert_relative_eq;

    fn periodic_config(m: usize, cells: usize, kn: f64) -> SolverConfig {
        SolverConfig {
            max_order: m,
            dim: 3,
            cells,
            x_lo: 0.0,
            x_hi: std::f64::consts::TAU,
            cfl: 0.95,
            kn,
            tau_model: TauModel::KnOverRho,
            closure: ClosureKind::Linear,
            boundary: BoundaryKind::Periodic,
            reconstruction: Reconstruction::VanLeer,
        }
    }

    #[test]
    fn tridiagonal_solvers() {
        let n = 7;
        let a: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| 4.0 + 0.3 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.2).collect();
        for cyclic in [false, true] {
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                rhs[i] = b[i] * x[i];
                if i > 0 {
                    rhs[i] += a[i] * x[i - 1];
                } else if cyclic {
                    rhs[i] += a[0] * x[n - 1];
                }
                if i + 1 < n {
                    rhs[i] += c[i] * x[i + 1];
                } else if cyclic {
                    rhs[i] += c[n - 1] * x[0];
                }
            }
            if cyclic {
                solve_cyclic(&a, &b, &c, &mut rhs);
            } else {
                solve_tridiagonal(&a, &b, &c, &mut rhs);
            }
            for i in 0..n {
                assert_relative_eq!(rhs[i], x[i], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn flux_of_maxwellian() {
        let layout = MomentLayout::new(3, 3).unwrap();
        let m = MacroState::one_d(2.0, 0.5, 1.5, 3).unwrap();
        let f = maxwellian_coeffs(&m, &layout);
        let mut out = vec![0.0; layout.len()];
        flux_coefficients(f.as_slice(), 0.5, 1.5, &layout, None, &mut out);
        // ρu, ρθ along e_1, zero elsewhere
        assert_relative_eq!(out[0], 1.0);
        assert_relative_eq!(out[layout.unit(0)], 3.0);
        let c = conserved(&out, m.u(), m.theta(), &layout);
        // energy flux u(E + p)
        let e = 0.5 * 2.0 * 0.25 + 1.5 * 2.0 * 1.5;
        assert_relative_eq!(c.energy, 0.5 * (e + 3.0), epsilon = 1e-14);
        assert_relative_eq!(c.momentum[0], 2.0 * 0.25 + 3.0, epsilon = 1e-14);
    }

    #[test]
    fn uniform_flow_is_stationary() {
        let cfg = periodic_config(4, 16, 0.1);
        let mut s = Solver::<f64>::new(cfg, None).unwrap();
        let mut st = s.equilibrium_state(|_| MacroState::one_d(1.3, 0.7, 0.9, 3)).unwrap();
        let init = st.clone();
        for _ in 0..5 {
            s.step(&mut st, None).unwrap();
        }
        for i in 0..16 {
            assert_relative_eq!(st.frame(i).rho(), 1.3, epsilon = 1e-13);
            assert_relative_eq!(st.frame(i).u1(), 0.7, epsilon = 1e-13);
            for (a, b) in st.coeffs(i).iter().zip(init.coeffs(i)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn periodic_conservation_each_step() {
        for closure in [ClosureKind::Linear, ClosureKind::Nonlinear] {
            let mut cfg = periodic_config(5, 40, 0.05);
            cfg.closure = closure;
            let sc = periodic_wave(0.05);
            let mut s = Solver::<f64>::new(cfg, None).unwrap();
            let mut st = s.equilibrium_state(|x| sc.initial_state(x)).unwrap();
            let dx = s.dx();
            let mut prev = st.totals(s.layout(), dx);
            for _ in 0..30 {
                s.step(&mut st, None).unwrap();
                let now = st.totals(s.layout(), dx);
                for k in 0..3 {
                    assert!((now[k] - prev[k]).abs() <= 1e-12 * prev[k].abs().max(1.0), "{closure} {k}");
                }
                prev = now;
            }
            for i in 0..st.cells() {
                let c = MomentCoeffs::from_vec(s.layout(), st.coeffs(i).to_vec()).unwrap();
                assert!(constraint_residual(&c, st.frame(i), s.layout()) < 1e-12);
            }
        }
    }

    #[test]
    fn far_field_balance() {
        let settings = RunConfig { cells: Some(50), kn: Some(0.05), ..Default::default() }.resolve().unwrap();
        let (mut s, mut st) = Solver::<f64>::for_scenario(&settings).unwrap();
        let dx = s.dx();
        let start = st.totals(s.layout(), dx);
        s.run(&mut st, StopCriterion::Time(0.1)).unwrap();
        let end = st.totals(s.layout(), dx);
        for k in 0..3 {
            assert!((end[k] - start[k] - st.boundary_inflow[k]).abs() < 1e-12 * start[k].abs().max(1.0));
        }
        assert_relative_eq!(st.time, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn regularization_is_top_order_diffusion() {
        // common frame, varying density: -∂_x((α_1+1)τθ ∂_x f_α) with τ = Kn/ρ
        let kn = 0.3;
        let mut errs = Vec::new();
        for cells in [64, 128] {
            let cfg = periodic_config(3, cells, kn);
            let mut s = Solver::<f64>::new(cfg, None).unwrap();
            let layout = s.layout().clone();
            let top = layout.grade(3);
            let rho = |x: f64| 1.0 + 0.3 * x.sin();
            let g = |x: f64, t: usize| 0.01 * (1.0 + t as f64) * (x + 0.4 * t as f64).cos();
            let st = s
                .state_from_fn(|x| {
                    let m = MacroState::one_d(rho(x), 0.0, 1.0, 3)?;
                    let mut c = maxwellian_coeffs(&m, &layout).into_vec();
                    for (t, kk) in top.clone().enumerate() {
                        c[kk] = g(x, t);
                    }
                    Ok((m, c))
                })
                .unwrap();
            let div = s.regularization_divergence(&st).unwrap();
            let idx = s.top_indices();
            let mut worst: f64 = 0.0;
            for i in 0..cells {
                let x = s.config().cell_center(i);
                for (t, a) in idx.iter().enumerate() {
                    let a1 = (a.get(0) + 1) as f64;
                    // d/dx(k ∂g) with k = a1 Kn/ρ
                    let gx = -0.01 * (1.0 + t as f64) * (x + 0.4 * t as f64).sin();
                    let gxx = -g(x, t);
                    let k = a1 * kn / rho(x);
                    let kx = -a1 * kn * 0.3 * x.cos() / (rho(x) * rho(x));
                    let want = kx * gx + k * gxx;
                    worst = worst.max((div[i][t] - want).abs());
                }
            }
            errs.push(worst);
        }
        assert!(errs[1] < 1e-4, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn shock_tube_runs() {
        let settings = RunConfig { cells: Some(60), kn: Some(0.02), ..Default::default() }.resolve().unwrap();
        let (mut s, mut st) = Solver::<f64>::for_scenario(&settings).unwrap();
        let rep = s.run(&mut st, shock_tube(0.02).stop).unwrap();
        assert_eq!(rep.dt_history.len(), rep.steps);
        let prof = s.profile(&st);
        assert!(prof.iter().all(|r| r.rho > 0.9 && r.rho < 7.1 && r.theta > 0.0));
        assert!(prof.first().unwrap().rho > 6.9 && prof.last().unwrap().rho < 1.1);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = periodic_config(2, 10, 0.1);
        assert!(Solver::<f64>::new(cfg.clone(), None).is_err());
        cfg.max_order = 3;
        cfg.cfl = 0.0;
        assert!(Solver::<f64>::new(cfg.clone(), None).is_err());
        cfg.cfl = 0.5;
        cfg.boundary = BoundaryKind::FarField;
        assert!(Solver::<f64>::new(cfg, None).is_err());
    }
}
