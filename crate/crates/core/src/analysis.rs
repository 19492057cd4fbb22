//! Post-processing of trajectories: convergence-rate fits on oscillation
//! envelopes, Lyapunov traces and steady-state oscillation size.

use crate::controllers::{phase_term, EsParams};
use crate::error::{invalid, Error, Result};
use crate::maps::CostMap;
use crate::scalar::{distance, Scalar};
use crate::schedules::Schedule;
use crate::sim::{fmt17, Trajectory};

/// Peaks below this are treated as round-off.
pub const NOISE_FLOOR: f64 = 1e-13;
/// Fewest envelope points a fit accepts.
pub const MIN_ENVELOPE_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `|e| ∝ (1 + β(t - t0))^(-estimate)`
    PowerLaw,
    /// `|e| ∝ exp(-estimate · t)`
    Exponential,
}

impl RateModel {
    pub fn label(self) -> &'static str {
        match self {
            RateModel::PowerLaw => "power_law",
            RateModel::Exponential => "exponential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit<T> {
    pub model: RateModel,
    pub estimate: T,
    /// RMS residual of the fit in the log domain.
    pub residual: T,
    pub window: (T, T),
    pub points: usize,
}

/// Envelope samples of a non-negative signal on `[t_a, t_b]`.
///
/// Strict local maxima over a 3-sample stencil are used when the window
/// holds at least [`MIN_ENVELOPE_POINTS`] of them; otherwise the signal is
/// treated as non-oscillatory and every sample is kept. Values below
/// [`NOISE_FLOOR`] are dropped.
pub fn envelope<T: Scalar>(times: &[T], values: &[T], window: (T, T)) -> Result<Vec<(T, T)>> {
    check_window(times, window)?;
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
    }
    let inside: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, v)| (*t, *v))
        .collect();
    let peaks: Vec<(T, T)> = inside
        .windows(3)
        .filter(|w| w[1].1 > w[0].1 && w[1].1 > w[2].1)
        .map(|w| w[1])
        .collect();
    let raw = if peaks.len() >= MIN_ENVELOPE_POINTS { peaks } else { inside };
    let floor = T::lit(NOISE_FLOOR);
    let kept: Vec<(T, T)> = raw.iter().copied().filter(|(_, v)| *v >= floor).collect();
    if kept.len() < MIN_ENVELOPE_POINTS {
        if kept.len() < raw.len() {
            return Err(Error::WindowTooLate(format!(
                "only {} envelope points above {NOISE_FLOOR:e} in [{}, {}]",
                kept.len(),
                window.0,
                window.1
            )));
        }
        return Err(invalid(format!(
            "envelope has {} points in [{}, {}], need {MIN_ENVELOPE_POINTS}",
            kept.len(),
            window.0,
            window.1
        )));
    }
    Ok(kept)
}

fn check_window<T: Scalar>(times: &[T], window: (T, T)) -> Result<()> {
    let (a, b) = window;
    if !(b > a) {
        return Err(invalid(format!("fit window [{a}, {b}] is empty")));
    }
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(invalid("empty trajectory"));
    };
    let slack = T::lit(1e-9) * T::one().max(last.abs());
    if a < first - slack || b > last + slack {
        return Err(invalid(format!("fit window [{a}, {b}] outside trajectory span [{first}, {last}]")));
    }
    Ok(())
}

/// Least squares `ln v = c + slope·x`; returns `(slope, rms residual)`.
fn log_linear_fit<T: Scalar>(points: &[(T, T)]) -> (T, T) {
    let n = T::from_count(points.len());
    let (sx, sy) = points
        .iter()
        .fold((T::zero(), T::zero()), |(a, b), (x, v)| (a + *x, b + v.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.iter().fold((T::zero(), T::zero()), |(a, b), (x, v)| {
        let dx = *x - mx;
        (a + dx * (v.ln() - my), b + dx * dx)
    });
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let ss = points.iter().fold(T::zero(), |acc, (x, v)| {
        let r = v.ln() - (my + slope * (*x - mx));
        acc + r * r
    });
    (slope, (ss / n).sqrt())
}

fn fit_with<T: Scalar>(
    model: RateModel,
    times: &[T],
    values: &[T],
    window: (T, T),
    regressor: impl Fn(T) -> T,
) -> Result<RateFit<T>> {
    let env = envelope(times, values, window)?;
    let pts: Vec<(T, T)> = env.iter().map(|(t, v)| (regressor(*t), *v)).collect();
    let (slope, residual) = log_linear_fit(&pts);
    Ok(RateFit { model, estimate: -slope, residual, window, points: pts.len() })
}

/// Power-law exponent of a non-negative signal against `1 + β(t - t0)`.
pub fn fit_power_rate_signal<T: Scalar>(times: &[T], values: &[T], beta: T, t0: T, window: (T, T)) -> Result<RateFit<T>> {
    if !(beta > T::zero()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    fit_with(RateModel::PowerLaw, times, values, window, |t| (beta * (t - t0)).ln_1p())
}

/// Exponential rate of a non-negative signal.
pub fn fit_exp_rate_signal<T: Scalar>(times: &[T], values: &[T], window: (T, T)) -> Result<RateFit<T>> {
    let t0 = times.first().copied().unwrap_or_else(T::zero);
    fit_with(RateModel::Exponential, times, values, window, |t| t - t0)
}

fn error_norms<T: Scalar>(traj: &Trajectory<T>, theta_star: &[T]) -> Result<Vec<T>> {
    if traj.dim() != theta_star.len() {
        return Err(Error::DimensionMismatch { expected: traj.dim(), got: theta_star.len() });
    }
    Ok(traj.theta.iter().map(|th| distance(th, theta_star)).collect())
}

/// Power-law rate of `|θ(t) - θ*|`.
pub fn fit_power_rate<T: Scalar>(traj: &Trajectory<T>, theta_star: &[T], beta: T, t0: T, window: (T, T)) -> Result<RateFit<T>> {
    fit_power_rate_signal(&traj.times, &error_norms(traj, theta_star)?, beta, t0, window)
}

/// Exponential rate of `|θ(t) - θ*|`.
pub fn fit_exp_rate<T: Scalar>(traj: &Trajectory<T>, theta_star: &[T], window: (T, T)) -> Result<RateFit<T>> {
    fit_exp_rate_signal(&traj.times, &error_norms(traj, theta_star)?, window)
}

/// CSV with columns `model,estimate,residual,window_start,window_end`.
pub fn fit_report_csv<T: Scalar>(fits: &[RateFit<T>]) -> String {
    let mut out = String::from("model,estimate,residual,window_start,window_end\n");
    for f in fits {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            f.model.label(),
            fmt17(f.estimate),
            fmt17(f.residual),
            fmt17(f.window.0),
            fmt17(f.window.1)
        ));
    }
    out
}

/// `V(t) = ξ^{2κ}(t) J_f(θ_f(t), ξ(t))` along a run recorded in scaled
/// coordinates (`traj_f.theta` holds `θ_f`).
pub fn lyapunov_trace<T: Scalar>(map: &CostMap<T>, traj_f: &Trajectory<T>, schedule: &Schedule<T>) -> Result<Vec<T>> {
    if schedule.is_nominal() {
        return Err(invalid("Lyapunov trace needs an asymptotic or exponential schedule"));
    }
    let two_kappa = T::lit(2.0 * map.kappa() as f64);
    traj_f
        .times
        .iter()
        .zip(&traj_f.theta)
        .map(|(&t, th)| {
            let log_xi = schedule.log_xi(t)?;
            let xi = log_xi.exp();
            let offset: Vec<T> = th.iter().map(|&v| v / xi).collect();
            Ok((two_kappa * log_xi).exp() * map.centered_eval(&offset)?)
        })
        .collect()
}

/// `|k_i φ(t) (y - η)|` maximised over channels, per sample.
pub fn gain_weighted_error<T: Scalar>(traj: &Trajectory<T>, params: &EsParams<T>) -> Result<Vec<T>> {
    let kmax = params.k.iter().copied().fold(T::zero(), T::max);
    traj.times
        .iter()
        .zip(traj.y.iter().zip(&traj.eta))
        .map(|(&t, (&y, &eta))| Ok(phase_term(kmax, params.schedule.log_phi(t)?, y - eta, t)?.abs()))
        .collect()
}

/// Mean of `θ` over `[t_a, t_b]` and the oscillation amplitude about it:
/// half the peak-to-peak excursion per component, combined in Euclidean norm.
pub fn oscillation_amplitude_window<T: Scalar>(traj: &Trajectory<T>, window: (T, T)) -> Result<(Vec<T>, T)> {
    check_window(&traj.times, window)?;
    let rows: Vec<&Vec<T>> = traj
        .times
        .iter()
        .zip(&traj.theta)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(_, th)| th)
        .collect();
    if rows.len() < 20 {
        return Err(invalid(format!("oscillation window holds {} samples, need 20", rows.len())));
    }
    let n = traj.dim();
    let count = T::from_count(rows.len());
    let mut mean = vec![T::zero(); n];
    let mut lo = vec![T::infinity(); n];
    let mut hi = vec![T::neg_infinity(); n];
    for th in &rows {
        for i in 0..n {
            mean[i] = mean[i] + th[i];
            lo[i] = lo[i].min(th[i]);
            hi[i] = hi[i].max(th[i]);
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / count);
    let half = T::lit(0.5);
    let amp = (0..n)
        .map(|i| half * (hi[i] - lo[i]))
        .fold(T::zero(), |acc, a| acc + a * a)
        .sqrt();
    Ok((mean, amp))
}

/// [`oscillation_amplitude_window`] over the last `tail_fraction` of the
/// time span.
pub fn oscillation_amplitude<T: Scalar>(traj: &Trajectory<T>, tail_fraction: T) -> Result<(Vec<T>, T)> {
    if !(tail_fraction > T::zero() && tail_fraction < T::one()) {
        return Err(invalid(format!("tail fraction must lie in (0, 1), got {tail_fraction}")));
    }
    let (Some(&first), Some(&last)) = (traj.times.first(), traj.times.last()) else {
        return Err(invalid("empty trajectory"));
    };
    oscillation_amplitude_window(traj, (last - tail_fraction * (last - first), last))
}
