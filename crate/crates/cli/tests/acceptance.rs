//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ueslab::analysis::{fit_exp_rate, fit_power_rate, fit_power_rate_signal, gain_weighted_error, oscillation_amplitude_window};
use ueslab::averaging::{averaging_gap, lie_bracket, TransformedFields, BRACKET_STEP};
use ueslab::scalar::{norm, Scalar};
use ueslab::sim::{lemma1_check, STEPS_PER_PERIOD};
use ueslab::{CostMap64, EsParams64, Lemma1Params64, Schedule64, TransformedState64, Trajectory64};
use ueslab_cli::config::ExperimentConfig;
use ueslab_cli::simulate;

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(format!("{name}.cfg"))).expect("bundled config")
}

fn run_config(cfg: &ExperimentConfig) -> Result<Trajectory64, String> {
    let sim = simulate(cfg).map_err(|e| e.to_string())?;
    match sim.failure {
        Some(e) => Err(e.to_string()),
        None => Ok(sim.trajectory),
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lemma_oracle() -> Outcome {
    let start = Instant::now();
    let p = Lemma1Params64::new(0.1, 1.0, 1.0, 0.5, 1.5, 1.0, 0.0).map_err(|e| e.to_string())?;
    let c = lemma1_check(&p, 100.0, 1e-3, 1).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        c.max_rel_error < 1e-6 && secs < 5.0,
        format!("max rel error {:.3e} (< 1e-6), {secs:.2} s (< 5 s)", c.max_rel_error),
    )
}

fn fig3_rate(fig3: &ExperimentConfig, traj: &Trajectory64, secs: f64) -> Outcome {
    let last = traj.theta.last().ok_or("empty trajectory")?[0];
    let t_end = *traj.times.last().unwrap();
    let fit = fit_power_rate(traj, &[2.0], 0.1, 0.0, (10.0, 100.0)).map_err(|e| e.to_string())?;
    let err = (last - 2.0).abs();
    verdict(
        (t_end - 100.0).abs() < 1e-9 && fig3.dt <= TAU / 200.0 * (1.0 + 1e-12) && err < 0.05 && (fit.estimate - 3.0).abs() <= 0.6 && secs < 30.0,
        format!(
            "|theta(100) - 2| = {err:.3e} (< 0.05), power-law exponent {:.3} on [10, 100] (3 +/- 0.6), {secs:.2} s (< 30 s)",
            fit.estimate
        ),
    )
}

fn min_theta(traj: &Trajectory64, window: (f64, f64)) -> f64 {
    traj.times
        .iter()
        .zip(&traj.theta)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(_, th)| th[0])
        .fold(f64::INFINITY, f64::min)
}

fn fig2_contrast() -> Outcome {
    let a = run_config(&load("fig2_nominal_a"))?;
    let b = run_config(&load("fig2_nominal_b"))?;
    let amp = |t: &Trajectory64, w| oscillation_amplitude_window(t, w).map(|(_, a)| a).map_err(|e| e.to_string());
    let (a_mid, a_tail, b_tail) = (amp(&a, (40.0, 60.0))?, amp(&a, (80.0, 100.0))?, amp(&b, (80.0, 100.0))?);
    let (a_min, b_min) = (min_theta(&a, (0.0, 10.0)), min_theta(&b, (0.0, 10.0)));
    verdict(
        a_tail > 0.05 && a_tail >= 0.5 * a_mid && b_tail < a_tail && b_min < a_min,
        format!(
            "run a tail amplitude {a_tail:.3} (> 0.05, >= 0.5 x {a_mid:.3}); run b tail {b_tail:.3} (< a); min theta on [0, 10]: b {b_min:.3} < a {a_min:.3}"
        ),
    )
}

fn exponential_rate() -> Outcome {
    let cfg = load("exp_quadratic_ues");
    let traj = run_config(&cfg)?;
    let fit = fit_exp_rate(&traj, &[1.0], (5.0, 60.0)).map_err(|e| e.to_string())?;
    verdict(
        (fit.estimate - 0.1).abs() <= 0.015,
        format!("exponential rate {:.4} on [5, 60] (0.1 +/- 15%)", fit.estimate),
    )
}

fn fig3_params(omega: f64) -> Result<EsParams64, String> {
    let s = Schedule64::asymptotic(0.1, 1.0 / 3.0, 4.0, 0.0).map_err(|e| e.to_string())?;
    EsParams64::new(vec![1.0], vec![0.3], vec![1.0], omega, 3.0, s).map_err(|e| e.to_string())
}

fn averaging_consistency() -> Outcome {
    let map = CostMap64::quartic_paper();
    let start = TransformedState64 { theta_f: vec![1.0], eta_f: 0.0 };
    let mut gaps = Vec::new();
    for omega in [10.0, 50.0, 250.0] {
        let p = fig3_params(omega)?;
        gaps.push(averaging_gap(&p, &map, &start, 20.0, STEPS_PER_PERIOD).map_err(|e| e.to_string())?);
    }
    verdict(
        gaps.windows(2).all(|w| w[1] < w[0]),
        format!("sup gap on [0, 20] for omega 10/50/250: {:.4} / {:.4} / {:.4} (strictly decreasing)", gaps[0], gaps[1], gaps[2]),
    )
}

fn bracket_identity() -> Outcome {
    let map = CostMap64::quartic_paper();
    let p = fig3_params(5.0)?;
    let fields = TransformedFields::new(&p, &map).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut eta_block_zero = true;
    for _ in 0..100 {
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let t = rng.gen_range(0.0..5.0);
        let br = lie_bracket(|z, s| fields.cos_field(0, z, s), |z, s| fields.sin_field(0, z, s), &x, t, BRACKET_STEP)
            .map_err(|e| e.to_string())?;
        let closed = fields.bracket_closed_form(0, &x, t).map_err(|e| e.to_string())?;
        // both sides carry the averaging factor 1/2
        let (num, cf) = (0.5 * br[0], 0.5 * closed[0]);
        worst = worst.max((num - cf).abs() / (1.0 + cf.abs()));
        eta_block_zero &= br[1] == 0.0;
    }
    verdict(
        worst < 1e-5 && eta_block_zero,
        format!("worst scaled gap {worst:.3e} over 100 points (< 1e-5), eta block exactly 0: {eta_block_zero}"),
    )
}

fn gain_error_boundedness(fig3: &ExperimentConfig, traj: &Trajectory64) -> Outcome {
    let signal = gain_weighted_error(traj, &fig3.params).map_err(|e| e.to_string())?;
    let period = fig3.params.base_period();
    let i = traj.index_near(period).ok_or("empty trajectory")?;
    let at_period = signal[i];
    let (i_max, peak) = signal
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
    verdict(
        peak < 10.0 * at_period,
        format!(
            "max |k phi (y - eta)| = {peak:.4} at t = {:.3}, value at t = {:.4} is {at_period:.4} (ratio {:.2}, need < 10)",
            traj.times[i_max],
            traj.times[i],
            peak / at_period
        ),
    )
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1.0)
}

fn derivative_checks() -> Outcome {
    let maps = [
        CostMap64::quartic_paper(),
        CostMap64::quadratic(vec![1.0, 3.0], vec![1.0, -0.5]).map_err(|e| e.to_string())?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for map in &maps {
        let opt = map.optimum().unwrap().to_vec();
        for _ in 0..100 {
            let theta: Vec<f64> = opt.iter().map(|o| o + rng.gen_range(-3.0..3.0)).collect();
            let g = map.gradient(&theta).map_err(|e| e.to_string())?;
            let gfd = map.grad_fd(&theta, f64::FD_STEP).map_err(|e| e.to_string())?;
            worst_g = worst_g.max(relative(&gfd, &g));
            let h: Vec<f64> = map.hessian(&theta).map_err(|e| e.to_string())?.concat();
            let hfd: Vec<f64> = map.hess_fd(&theta, f64::FD_STEP2).map_err(|e| e.to_string())?.concat();
            worst_h = worst_h.max(relative(&hfd, &h));
        }
    }
    let b = CostMap64::quartic_paper().verify_power_bounds(1.0, 2000, 8).map_err(|e| e.to_string())?;
    let near = |v: f64, target: f64| (v - target).abs() <= 0.01 * target;
    let bounds_ok = near(b.a1, 1.0) && near(b.a2, 1.0) && near(b.b1, 4.0) && near(b.b2, 4.0) && near(b.c1, 12.0) && near(b.c2, 12.0);
    verdict(
        worst_g < 1e-5 && worst_h < 1e-5 && bounds_ok,
        format!(
            "gradient {worst_g:.2e}, Hessian {worst_h:.2e} (< 1e-5); quartic bounds a {:.4}/{:.4} b {:.4}/{:.4} c {:.4}/{:.4}",
            b.a1, b.a2, b.b1, b.b2, b.c1, b.c2
        ),
    )
}

fn output_rate(traj: &Trajectory64) -> Outcome {
    let y_err: Vec<f64> = traj.y.iter().map(|y| (y - 1.0).abs()).collect();
    let fit = fit_power_rate_signal(&traj.times, &y_err, 0.1, 0.0, (2.0, 20.0)).map_err(|e| e.to_string())?;
    verdict(fit.estimate >= 8.0, format!("power-law exponent of y - 1 on [2, 20]: {:.3} (>= 8)", fit.estimate))
}

fn determinism() -> Outcome {
    let cfg = configs_dir().join("fig3_asymptotic_ues.cfg");
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_ueslab"))
            .env("UESLAB_OUT", d.path())
            .arg("run")
            .arg(&cfg)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("run failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    let mut compared = 0;
    for f in ["fig3_asymptotic_ues_trajectory.csv", "fig3_asymptotic_ues_fit.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
        compared += a.len();
    }
    Ok(format!("trajectory and fit CSVs byte-identical ({compared} bytes)"))
}

fn main() {
    let fig3 = load("fig3_asymptotic_ues");
    let start = Instant::now();
    let fig3_run = run_config(&fig3);
    let fig3_secs = start.elapsed().as_secs_f64();

    let with_fig3 = |f: &dyn Fn(&Trajectory64) -> Outcome| match &fig3_run {
        Ok(t) => f(t),
        Err(e) => Err(format!("reference run failed: {e}")),
    };

    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "lemma oracle", lemma_oracle()),
        (2, "asymptotic uES rate", with_fig3(&|t| fig3_rate(&fig3, t, fig3_secs))),
        (3, "nominal ES contrast", fig2_contrast()),
        (4, "exponential uES rate", exponential_rate()),
        (5, "averaging consistency", averaging_consistency()),
        (6, "bracket identity", bracket_identity()),
        (7, "gain-weighted error boundedness", with_fig3(&|t| gain_error_boundedness(&fig3, t))),
        (8, "derivative checks", derivative_checks()),
        (9, "output rate", with_fig3(&output_rate)),
        (10, "determinism", determinism()),
    ];

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL  {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
