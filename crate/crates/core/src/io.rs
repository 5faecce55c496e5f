//! CSV profiles, profile comparison and the cache of discrete-velocity
//! reference solutions.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dvm::DvmSolver;
use crate::error::{Error, Result};
use crate::fv::ProfileRow;
use crate::multi_index::MultiIndex;
use crate::scenarios::RunSettings;

/// Column names of a profile file.
pub const PROFILE_COLUMNS: [&str; 6] = ["x", "rho", "u1", "theta", "sigma11", "q1"];

/// Formats with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric CSV file with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn from_profile(rows: &[ProfileRow]) -> Self {
        Table {
            headers: PROFILE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| vec![r.x, r.rho, r.u1, r.theta, r.sigma11, r.q1]).collect(),
        }
    }

    /// Profile with one extra column per coefficient, labelled `f_a_b_c`.
    pub fn from_profile_with_coeffs(rows: &[ProfileRow], indices: &[MultiIndex], coeffs: &[Vec<f64>]) -> Result<Self> {
        if coeffs.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: coeffs.len() });
        }
        let mut t = Self::from_profile(rows);
        t.headers.extend(indices.iter().map(coefficient_label));
        for (row, c) in t.rows.iter_mut().zip(coeffs) {
            if c.len() != indices.len() {
                return Err(Error::DimensionMismatch { expected: indices.len(), got: c.len() });
            }
            row.extend_from_slice(c);
        }
        Ok(t)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::InvalidConfig(format!("column '{name}' not found")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.headers).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|&v| format_value(v))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidConfig(format!("{}: bad number '{s}': {e}", path.display()))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != headers.len() {
                return Err(Error::InvalidConfig(format!("{}: ragged row", path.display())));
            }
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }
}

/// Column label of the coefficient `f_α`.
pub fn coefficient_label(alpha: &MultiIndex) -> String {
    alpha.components().fold(String::from("f"), |s, c| format!("{s}_{c}"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Error norms of one column of `a` against `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    /// Mean absolute difference.
    pub l1: f64,
    /// `Σ|a - b| / Σ|b|`.
    pub l1_relative: f64,
    pub linf: f64,
}

/// Linear interpolation of `(xs, ys)` at `x`, constant beyond the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.len() == 1 || x <= xs[0] {
        return ys[0];
    }
    let k = xs.partition_point(|&a| a < x);
    if k >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    ys[k - 1] * (1.0 - w) + ys[k] * w
}

/// Compares `column` of `a` against `b`, interpolating `b` linearly onto the
/// `x` values of `a` when the grids differ.
pub fn compare(a: &Table, b: &Table, column: &str) -> Result<Norms> {
    let (ya, yb) = (a.column(column)?, b.column(column)?);
    if ya.is_empty() || yb.is_empty() {
        return Err(Error::InvalidConfig("cannot compare empty tables".into()));
    }
    let (xa, xb) = (a.column("x")?, b.column("x")?);
    if xb.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("x column must be strictly increasing".into()));
    }
    let same = xa == xb;
    let (mut sum, mut base, mut worst) = (0.0, 0.0, 0.0f64);
    for (i, (&x, &v)) in xa.iter().zip(&ya).enumerate() {
        let r = if same { yb[i] } else { interpolate(&xb, &yb, x) };
        let d = (v - r).abs();
        sum += d;
        base += r.abs();
        worst = worst.max(d);
    }
    let l1_relative = if base > 0.0 {
        sum / base
    } else if sum == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Norms { l1: sum / ya.len() as f64, l1_relative, linf: worst })
}

/// Resolution of a discrete-velocity reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolution {
    pub cells: usize,
    pub velocities: usize,
    pub v_max: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { cells: crate::dvm::REFERENCE_CELLS, velocities: crate::dvm::REFERENCE_VELOCITIES, v_max: crate::dvm::REFERENCE_VMAX }
    }
}

/// Cache file for a reference solution, keyed by scenario, Knudsen number
/// and resolution.
pub fn reference_path(dir: &Path, settings: &RunSettings, res: &Resolution) -> PathBuf {
    let sc = &settings.scenario;
    // initial data, domain, stopping rule and viscosity law enter through a digest
    let detail = format!("{:?}|{}|{}|{:?}|{:?}|{:?}", sc.initial, sc.x_lo, sc.x_hi, sc.stop, sc.boundary, sc.tau_model);
    let digest = detail.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let key = format!(
        "{}_D{}_kn{}_{}_nx{}_nv{}_vmax{}_{:08x}",
        sc.name,
        sc.dim,
        sc.kn,
        sc.tau_model.tag(),
        res.cells,
        res.velocities,
        res.v_max,
        digest >> 32
    );
    dir.join(format!("{key}.csv"))
}

/// Loads the cached reference or computes and stores it. Returns the table
/// and whether it was freshly generated.
pub fn load_or_make_reference(dir: &Path, settings: &RunSettings, res: &Resolution) -> Result<(Table, bool)> {
    let path = reference_path(dir, settings, res);
    if path.exists() {
        return Ok((Table::read(&path)?, false));
    }
    let table = make_reference(settings, res)?;
    table.write(&path)?;
    Ok((table, true))
}

pub fn make_reference(settings: &RunSettings, res: &Resolution) -> Result<Table> {
    let (solver, mut state) = DvmSolver::for_scenario(settings, res.cells, res.velocities, res.v_max)?;
    solver.run(&mut state, settings.scenario.stop)?;
    Ok(Table::from_profile(&solver.profile(&state)))
}
