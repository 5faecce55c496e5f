use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use regmom::dvm::{REFERENCE_CELLS, REFERENCE_VELOCITIES, REFERENCE_VMAX};
use regmom::io::{self, Resolution, Table};
use regmom::maxwell_iter::{grade_table, magnitude_table, ManufacturedField};
use regmom::scenarios::{RunConfig, RunSettings, StopCriterion, TauModel};
use regmom::{Error, MultiIndex, SolverF64};

#[derive(Parser)]
#[command(name = "regmom", version, about = "Regularized Hermite moment solver for the 1D BGK equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write profile, dt history and summary files.
    Run(RunArgs),
    /// Compare columns of two profile CSV files.
    Compare(CompareArgs),
    /// Tabulate measured versus predicted tau-exponents of the Maxwellian iteration.
    Magnitude(MagnitudeArgs),
    /// Generate (or reuse) a cached discrete-velocity reference solution.
    MakeRef(MakeRefArgs),
}

#[derive(Args, Clone, Default)]
struct ScenarioArgs {
    /// Built-in scenario: shock-tube, shock-structure or periodic-wave.
    #[arg(value_name = "SCENARIO")]
    positional: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    /// TOML file with run settings; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum moment order.
    #[arg(long = "M")]
    max_order: Option<usize>,
    /// Velocity dimension.
    #[arg(long = "D")]
    dim: Option<usize>,
    /// Knudsen number.
    #[arg(long = "Kn")]
    kn: Option<f64>,
    /// Upstream Mach number (shock-structure only).
    #[arg(long)]
    mach: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    /// CFL number [default: 0.95].
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long, value_parser = PossibleValuesParser::new(["linear", "nonlinear"]))]
    closure: Option<String>,
    #[arg(long, value_parser = PossibleValuesParser::new(["kn-over-rho", "vhs"]))]
    tau: Option<String>,
    /// VHS viscosity exponent [default: 0.72].
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, value_parser = PossibleValuesParser::new(["first-order", "van-leer"]))]
    reconstruction: Option<String>,
    /// Final time, or the time limit of a steady run.
    #[arg(long)]
    t_end: Option<f64>,
    /// Residual tolerance of a steady run.
    #[arg(long)]
    steady_tolerance: Option<f64>,
}

impl ScenarioArgs {
    fn flags(&self) -> anyhow::Result<RunConfig> {
        let scenario = match (&self.positional, &self.scenario) {
            (Some(a), Some(b)) if a != b => bail!("conflicting scenarios '{a}' and '{b}'"),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        Ok(RunConfig {
            scenario,
            max_order: self.max_order,
            dim: self.dim,
            kn: self.kn,
            mach: self.mach,
            cells: self.cells,
            cfl: self.cfl,
            closure: self.closure.as_deref().map(str::parse).transpose()?,
            reconstruction: self.reconstruction.as_deref().map(str::parse).transpose()?,
            tau: self.tau.clone(),
            omega: self.omega,
            t_end: self.t_end,
            steady_tolerance: self.steady_tolerance,
            ..Default::default()
        })
    }

    fn config(&self) -> anyhow::Result<RunConfig> {
        let flags = self.flags()?;
        Ok(match &self.config {
            Some(path) => RunConfig::from_file(path)?.overlay(&flags),
            None => flags,
        })
    }

    fn settings(&self) -> anyhow::Result<RunSettings> {
        Ok(self.config()?.resolve()?)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Append every moment coefficient to the profile file.
    #[arg(long)]
    coeffs: bool,
    /// Number of equally spaced intermediate snapshots of a time-limited run.
    #[arg(long, default_value_t = 0)]
    snapshots: usize,
    /// Run once per listed order, each into its own subdirectory.
    #[arg(long = "sweep-M", value_delimiter = ',')]
    sweep: Vec<usize>,
    /// Number of sweep runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    file_a: PathBuf,
    /// Reference file, interpolated linearly onto the grid of the first file.
    file_b: PathBuf,
    /// Columns to compare.
    #[arg(long, value_delimiter = ',', default_value = "rho")]
    column: Vec<String>,
    /// Print the norms as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MagnitudeArgs {
    #[arg(long, default_value = "generic", value_parser = PossibleValuesParser::new(["generic", "equilibrium"]))]
    preset: String,
    /// Highest order of the table.
    #[arg(long = "M", default_value_t = 8)]
    max_order: usize,
    #[arg(long = "D", default_value_t = 3)]
    dim: usize,
    /// Number of Maxwellian-iteration sweeps.
    #[arg(long, default_value_t = 2)]
    iterations: usize,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,2e-4,4e-4,8e-4")]
    taus: Vec<f64>,
    /// Grid points of the periodic manufactured field.
    #[arg(long, default_value_t = 48)]
    points: usize,
    /// Aggregate exponents per order instead of per multi-index.
    #[arg(long)]
    grades: bool,
    /// Restrict the table to one multi-index, e.g. 1,1,1.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<usize>,
    /// Output CSV file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MakeRefArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of discrete velocities.
    #[arg(long, default_value_t = REFERENCE_VELOCITIES)]
    nv: usize,
    /// Velocity cut-off.
    #[arg(long, default_value_t = REFERENCE_VMAX)]
    vmax: f64,
    /// Cache directory.
    #[arg(long, default_value = "refs")]
    refs: PathBuf,
    /// Also copy the reference to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a).map(|_| ExitCode::SUCCESS),
        Command::Magnitude(a) => cmd_magnitude(&a).map(|_| ExitCode::SUCCESS),
        Command::MakeRef(a) => cmd_make_ref(&a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Breakdown { .. }) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn tau_json(t: &TauModel) -> serde_json::Value {
    match t {
        TauModel::KnOverRho => json!({ "model": "kn-over-rho" }),
        TauModel::Vhs { omega } => json!({ "model": "vhs", "omega": omega }),
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn profile_table(solver: &SolverF64, st: &regmom::SimStateF64, settings: &RunSettings, coeffs: bool) -> anyhow::Result<Table> {
    let rows = solver.profile(st);
    let mut t = if coeffs {
        let c: Vec<Vec<f64>> = (0..st.cells()).map(|i| st.coeffs(i).to_vec()).collect();
        Table::from_profile_with_coeffs(&rows, solver.layout().indices(), &c)?
    } else {
        Table::from_profile(&rows)
    };
    if let Some((up, down)) = settings.scenario.normalization {
        let rho: Vec<f64> = rows.iter().map(|r| r.rho).collect();
        let n = regmom::scenarios::normalize_density(&rho, up, down)?;
        t.headers.push("rho_normalized".into());
        for (row, v) in t.rows.iter_mut().zip(n) {
            row.push(v);
        }
    }
    Ok(t)
}

/// Runs one configuration into `out`. Breakdowns are recorded in the summary
/// and returned as errors.
fn run_one(settings: &RunSettings, out: &Path, coeffs: bool, snapshots: usize) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (mut solver, mut st) = SolverF64::for_scenario(settings)?;
    let start = Instant::now();
    let mut dts: Vec<f64> = Vec::new();
    let mut steady: (Option<bool>, Option<f64>) = (None, None);
    let stop = settings.scenario.stop;
    let outcome: anyhow::Result<()> = (|| {
        match stop {
            StopCriterion::Time(t_end) if snapshots > 0 => {
                for k in 1..=snapshots {
                    let t = t_end * k as f64 / snapshots as f64;
                    let rep = solver.run(&mut st, StopCriterion::Time(t))?;
                    dts.extend(rep.dt_history);
                    profile_table(&solver, &st, settings, coeffs)?.write(&out.join(format!("snapshot_{k:03}.csv")))?;
                }
            }
            _ => {
                let rep = solver.run(&mut st, stop)?;
                dts.extend(rep.dt_history);
                steady = (rep.converged, rep.residual);
            }
        }
        Ok(())
    })();
    let wall = start.elapsed().as_secs_f64();
    let sc = &settings.scenario;
    let breakdown = outcome.as_ref().err().and_then(|e| match e.downcast_ref::<Error>() {
        Some(Error::Breakdown { cell, time, reason }) => Some(json!({ "cell": cell, "time": time, "reason": reason })),
        _ => None,
    });
    if outcome.is_ok() {
        profile_table(&solver, &st, settings, coeffs)?.write(&out.join("profile.csv"))?;
    }
    let mut hist = String::from("step,dt\n");
    for (k, dt) in dts.iter().enumerate() {
        hist.push_str(&format!("{},{}\n", k + 1, io::format_value(*dt)));
    }
    write_text(&out.join("dt_history.csv"), &hist)?;
    let summary = json!({
        "scenario": sc.name,
        "M": settings.max_order,
        "D": sc.dim,
        "Kn": sc.kn,
        "cells": settings.cells,
        "cfl": settings.cfl,
        "closure": settings.closure.to_string(),
        "reconstruction": settings.reconstruction.to_string(),
        "tau": tau_json(&sc.tau_model),
        "domain": [sc.x_lo, sc.x_hi],
        "normalization": sc.normalization,
        "steps": dts.len(),
        "final_time": st.time,
        "wall_time_seconds": wall,
        "converged": steady.0,
        "residual": steady.1,
        "breakdown": breakdown.is_some(),
        "breakdown_at": breakdown,
    });
    write_text(&out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    outcome?;
    Ok(())
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<ExitCode> {
    let base = a.scenario.config()?;
    if a.sweep.is_empty() {
        let settings = base.resolve()?;
        run_one(&settings, &a.out, a.coeffs, a.snapshots)?;
        println!("wrote {}", a.out.display());
        return Ok(ExitCode::SUCCESS);
    }
    let jobs: Vec<(usize, RunSettings)> = a
        .sweep
        .iter()
        .map(|&m| Ok((m, base.clone().overlay(&RunConfig { max_order: Some(m), ..Default::default() }).resolve()?)))
        .collect::<anyhow::Result<_>>()?;
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.clamp(1, jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some((m, settings)) = jobs.get(k) else { break };
                let dir = a.out.join(format!("M{m}"));
                match run_one(settings, &dir, a.coeffs, a.snapshots) {
                    Ok(()) => println!("wrote {}", dir.display()),
                    Err(e) => {
                        eprintln!("M = {m}: {e:#}");
                        failures.lock().expect("no panics while holding the lock").push(e);
                    }
                }
            });
        }
    });
    match failures.into_inner().expect("threads joined").into_iter().next() {
        Some(e) => Err(e),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_compare(a: &CompareArgs) -> anyhow::Result<()> {
    let ta = Table::read(&a.file_a)?;
    let tb = Table::read(&a.file_b)?;
    let mut report = serde_json::Map::new();
    if !a.json {
        println!("column,l1,l1_relative,linf");
    }
    for c in &a.column {
        let n = io::compare(&ta, &tb, c)?;
        if a.json {
            report.insert(c.clone(), json!({ "l1": n.l1, "l1_relative": n.l1_relative, "linf": n.linf }));
        } else {
            println!("{c},{},{},{}", io::format_value(n.l1), io::format_value(n.l1_relative), io::format_value(n.linf));
        }
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(())
}

fn cmd_magnitude(a: &MagnitudeArgs) -> anyhow::Result<()> {
    let field = match a.preset.as_str() {
        "generic" => ManufacturedField::<f64>::generic(a.dim, a.points)?,
        _ => ManufacturedField::<f64>::equilibrium(a.dim, a.points)?,
    };
    let fmt = |m: Option<f64>| m.map_or_else(|| "nan".to_string(), io::format_value);
    let mut text = String::new();
    if a.grades {
        text.push_str("order,predicted,measured\n");
        for (order, predicted, measured) in grade_table(&field, &a.taus, a.iterations, a.max_order)? {
            text.push_str(&format!("{order},{predicted},{}\n", fmt(measured)));
        }
    } else {
        let only = if a.alpha.is_empty() {
            None
        } else {
            if a.alpha.len() != a.dim {
                bail!("--alpha needs {} components", a.dim);
            }
            Some(MultiIndex::new(&a.alpha)?)
        };
        text.push_str("alpha,order,predicted,measured\n");
        let rows = magnitude_table(&field, &a.taus, a.iterations, a.max_order)?;
        let mut found = false;
        for r in rows.iter().filter(|r| only.is_none_or(|o| o == r.alpha)) {
            found = true;
            text.push_str(&format!("\"{}\",{},{},{}\n", r.alpha, r.order, r.predicted, fmt(r.measured)));
        }
        if !found {
            return Err(anyhow!("multi-index {:?} is outside orders 2..={}", a.alpha, a.max_order));
        }
    }
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_make_ref(a: &MakeRefArgs) -> anyhow::Result<()> {
    let mut settings = a.scenario.settings()?;
    let steady = matches!(settings.scenario.stop, StopCriterion::Steady { .. });
    let cells = a.scenario.cells.unwrap_or(if steady { settings.scenario.cells } else { REFERENCE_CELLS });
    settings.cells = cells;
    let res = Resolution { cells, velocities: a.nv, v_max: a.vmax };
    let (table, fresh) = io::load_or_make_reference(&a.refs, &settings, &res)?;
    let path = io::reference_path(&a.refs, &settings, &res);
    println!("{} {}", if fresh { "generated" } else { "cached" }, path.display());
    if let Some(out) = &a.out {
        table.write(out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
