//! Experiment runner for `ueslab`: config files in, CSV and SVG out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ueslab::analysis::{fit_exp_rate, fit_exp_rate_signal, fit_power_rate, fit_power_rate_signal};
use ueslab::averaging::practical_stability_probe;
use ueslab::controllers::ClosedLoop;
use ueslab::scalar::distance;
use ueslab::sim::{fmt17, integrate, lemma1_check};
use ueslab::{Error, Lemma1Params64, ProbeRow64, RateFit64, ScheduleKind, Trajectory64};

use config::{ExperimentConfig, FitModel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

fn numeric(e: Error) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Outcome of integrating the closed loop of an experiment.
pub struct Simulation {
    pub trajectory: Trajectory64,
    /// Set when the run stopped early; `trajectory` then holds the samples
    /// up to the failure.
    pub failure: Option<Error>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation, CliError> {
    let sys = ClosedLoop::new(&cfg.params, &cfg.map).map_err(|e| CliError::Config(e.to_string()))?;
    let mut x0 = cfg.theta0.clone();
    x0.push(cfg.eta0);
    let t0 = cfg.params.schedule.t0();
    let (sol, failure) = match integrate(&sys, &x0, t0, t0 + cfg.horizon, cfg.dt, cfg.record_every) {
        Ok(sol) => (sol, None),
        Err(d) => (d.partial, Some(d.error)),
    };
    let trajectory = Trajectory64::from_solution(&sol, &cfg.map).map_err(numeric)?;
    Ok(Simulation { trajectory, failure })
}

/// A rate fit tagged with the signal it was computed on.
#[derive(Debug, Clone, Copy)]
pub struct NamedFit {
    pub signal: &'static str,
    pub fit: RateFit64,
}

/// Fits configured in `cfg.analysis`. A fit that cannot be computed is
/// reported in the second list instead of failing the run.
pub fn fit_rates(cfg: &ExperimentConfig, traj: &Trajectory64) -> (Vec<NamedFit>, Vec<String>) {
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    let (Some(opt), Some(jstar)) = (cfg.map.optimum(), cfg.map.optimal_value()) else {
        return (fits, skipped);
    };
    let t0 = cfg.params.schedule.t0();
    let beta = match cfg.params.schedule.kind() {
        ScheduleKind::Asymptotic { beta, .. } => beta,
        _ => 0.0,
    };
    let y_err: Vec<f64> = traj.y.iter().map(|y| (y - jstar).abs()).collect();
    let mut push = |signal: &'static str, r: ueslab::Result<RateFit64>| match r {
        Ok(fit) => fits.push(NamedFit { signal, fit }),
        Err(e) => skipped.push(format!("{signal} fit: {e}")),
    };
    match cfg.analysis.model {
        FitModel::None => {}
        FitModel::PowerLaw => {
            if let Some(w) = cfg.analysis.window {
                push("theta", fit_power_rate(traj, opt, beta, t0, w));
            }
            if let Some(w) = cfg.analysis.y_window {
                push("y", fit_power_rate_signal(&traj.times, &y_err, beta, t0, w));
            }
        }
        FitModel::Exponential => {
            if let Some(w) = cfg.analysis.window {
                push("theta", fit_exp_rate(traj, opt, w));
            }
            if let Some(w) = cfg.analysis.y_window {
                push("y", fit_exp_rate_signal(&traj.times, &y_err, w));
            }
        }
    }
    (fits, skipped)
}

/// CSV with columns `signal,model,estimate,residual,window_start,window_end,points`.
pub fn fits_csv(fits: &[NamedFit]) -> String {
    let mut out = String::from("signal,model,estimate,residual,window_start,window_end,points\n");
    for NamedFit { signal, fit } in fits {
        let _ = writeln!(
            out,
            "{signal},{},{},{},{},{},{}",
            fit.model.label(),
            fmt17(fit.estimate),
            fmt17(fit.residual),
            fmt17(fit.window.0),
            fmt17(fit.window.1),
            fit.points
        );
    }
    out
}

pub fn plot(cfg: &ExperimentConfig, traj: &Trajectory64) -> String {
    let n = traj.dim();
    let log_y = cfg.analysis.log_y;
    let opt = cfg.map.optimum().filter(|_| log_y);
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|i| traj.theta.iter().map(|th| th[i] - opt.map_or(0.0, |o| o[i])).collect())
        .collect();
    let y: Vec<f64> = match cfg.map.optimal_value().filter(|_| log_y) {
        Some(j) => traj.y.iter().map(|v| v - j).collect(),
        None => traj.y.clone(),
    };
    let mut series: Vec<svg::Series> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| svg::Series {
            label: match (n, opt.is_some()) {
                (1, false) => "theta".into(),
                (1, true) => "|theta - theta*|".into(),
                (_, false) => format!("theta_{}", i + 1),
                (_, true) => format!("|theta_{} - theta*_{}|", i + 1, i + 1),
            },
            values: c,
        })
        .collect();
    series.push(svg::Series { label: if log_y { "|y - J*|".into() } else { "y".into() }, values: &y });
    svg::line_plot(&cfg.name, &traj.times, &series, log_y)
}

fn output_dir(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out_override.map_or_else(|| cfg.output_dir.clone(), Path::to_path_buf);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug)]
pub struct RunReport {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub fits: Vec<NamedFit>,
    pub warnings: Vec<String>,
}

/// `run`: simulates, writes `<name>_trajectory.csv`, `<name>_fit.csv` and
/// `<name>_plot.svg`. On divergence the partial trajectory is written and a
/// numeric error returned.
pub fn run(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<RunReport, CliError> {
    let dir = output_dir(cfg, out_override)?;
    let sim = simulate(cfg)?;
    let traj = &sim.trajectory;
    let traj_path = dir.join(format!("{}_trajectory.csv", cfg.name));
    let plot_path = dir.join(format!("{}_plot.svg", cfg.name));
    write(&traj_path, &traj.to_csv())?;
    write(&plot_path, &plot(cfg, traj))?;
    if let Some(e) = sim.failure {
        return Err(CliError::Numeric(format!("{e}; partial trajectory in {}", traj_path.display())));
    }
    let (fits, warnings) = fit_rates(cfg, traj);
    let fit_path = dir.join(format!("{}_fit.csv", cfg.name));
    write(&fit_path, &fits_csv(&fits))?;

    let t_end = traj.times.last().copied().unwrap_or_default();
    let mut summary = format!("{}: t = {t_end}", cfg.name);
    if let (Some(opt), Some(last)) = (cfg.map.optimum(), traj.theta.last()) {
        let _ = write!(summary, ", |theta - theta*| = {:.3e}", distance(last, opt));
    }
    for NamedFit { signal, fit } in &fits {
        let _ = write!(
            summary,
            ", {signal} {} rate {:.3} on [{}, {}]",
            fit.model.label(),
            fit.estimate,
            fit.window.0,
            fit.window.1
        );
    }
    Ok(RunReport { summary, files: vec![traj_path, fit_path, plot_path], fits, warnings })
}

#[derive(Debug)]
pub struct SweepReport {
    pub summary: String,
    pub file: PathBuf,
    pub rows: Vec<ProbeRow64>,
}

/// `sweep`: runs the practical-stability probe and writes `<name>_probe.csv`.
pub fn sweep(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<SweepReport, CliError> {
    let probe = cfg
        .probe
        .as_ref()
        .ok_or_else(|| CliError::Config("`probe.omega`: missing (sweep needs probe settings)".into()))?;
    let dir = output_dir(cfg, out_override)?;
    let rows = practical_stability_probe(&cfg.params, &cfg.map, probe).map_err(|e| match e {
        Error::InvalidArgument(_) | Error::AssumptionViolation(_) | Error::Capability(_) | Error::DimensionMismatch { .. } => {
            CliError::Config(e.to_string())
        }
        e => numeric(e),
    })?;
    let file = dir.join(format!("{}_probe.csv", cfg.name));
    write(&file, &ueslab::averaging::probe_csv(&rows))?;
    let mut summary = format!("{}:", cfg.name);
    for &w in &probe.omega_values {
        let sel: Vec<&ProbeRow64> = rows.iter().filter(|r| r.omega == w).collect();
        let worst = sel.iter().filter_map(|r| r.sup_gap).fold(f64::NAN, f64::max);
        let stayed = sel.iter().filter(|r| r.stayed).count();
        let _ = write!(summary, " omega {w}: gap {worst:.3e}, {stayed}/{} settled;", sel.len());
    }
    summary.pop();
    Ok(SweepReport { summary, file, rows })
}

/// `lemma-check`: largest relative error between RK4 and the closed form of
/// the comparison ODE on `[0, t1]`.
pub fn lemma_check(params: &Lemma1Params64, t1: f64, dt: f64) -> Result<(f64, String), CliError> {
    if !(t1 > params.t0) || !(dt > 0.0) {
        return Err(CliError::Config(format!("need t1 > 0 and dt > 0 (got t1 = {t1}, dt = {dt})")));
    }
    let check = lemma1_check(params, t1, dt, 1).map_err(numeric)?;
    let report = format!(
        "max relative error {:.3e} at t = {} over {} samples (tolerance 1e-6)",
        check.max_rel_error, check.worst_time, check.samples
    );
    Ok((check.max_rel_error, report))
}

pub const LEMMA_TOLERANCE: f64 = 1e-6;
