//! Lie-bracket averaging of the transformed closed loop.
//!
//! In scaled error coordinates `x = (θ_f, η_f)` the loop is control-affine,
//!
//! ```text
//! ẋ = b₀(x,t) + Σᵢ b_c,i(x,t) √ωᵢ cos(ωᵢt) - b_s,i(x,t) √ωᵢ sin(ωᵢt)
//! ```
//!
//! and for large `ω` its trajectories stay close to those of
//! `x̄' = b₀ - ½ Σᵢ [b_c,i, b_s,i]`. The bracket has the closed form
//! `kᵢ αᵢ φ(t) eᵢ ∂J_f/∂θ_f,i` with a zero filter block, which gives the
//! averaged vector fields below. The probe measures how close the full loop
//! actually gets to them; it provides finite-sample evidence and cannot
//! establish the quantifier order of practical stability.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controllers::{scaled_terms, to_transformed, ClosedLoop, EsParams, EsState, TransformedState};
use crate::error::{invalid, Error, Result};
use crate::maps::{sample_in_ball, CostMap};
use crate::scalar::{distance, Scalar};
use crate::schedules::ScheduleKind;
use crate::sim::{fmt17, integrate, OdeSystem, Solution, STEPS_PER_PERIOD};

/// Default relative step for bracket Jacobians.
pub const BRACKET_STEP: f64 = 1e-6;

/// `[f, g](x, t) = (∂g/∂x) f - (∂f/∂x) g`, Jacobians by central differences
/// with step `h · max(1, |xⱼ|)` in coordinate `j`.
pub fn lie_bracket<T, F, G>(f: F, g: G, x: &[T], t: T, h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(&[T], T) -> Result<Vec<T>>,
    G: Fn(&[T], T) -> Result<Vec<T>>,
{
    if !(h > T::zero()) {
        return Err(invalid(format!("bracket step must be positive, got {h}")));
    }
    let n = x.len();
    let fx = finite_field(&f, x, t)?;
    let gx = finite_field(&g, x, t)?;
    if fx.len() != n || gx.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: fx.len().max(gx.len()) });
    }
    let mut out = vec![T::zero(); n];
    let mut xp = x.to_vec();
    let two = T::lit(2.0);
    // column j of each Jacobian contributes J[:, j] * v[j]
    for j in 0..n {
        let hj = h * T::one().max(x[j].abs());
        xp[j] = x[j] + hj;
        let fp = finite_field(&f, &xp, t)?;
        let gp = finite_field(&g, &xp, t)?;
        xp[j] = x[j] - hj;
        let fm = finite_field(&f, &xp, t)?;
        let gm = finite_field(&g, &xp, t)?;
        xp[j] = x[j];
        for i in 0..n {
            let dg = (gp[i] - gm[i]) / (two * hj);
            let df = (fp[i] - fm[i]) / (two * hj);
            out[i] = out[i] + dg * fx[j] - df * gx[j];
        }
    }
    Ok(out)
}

fn finite_field<T: Scalar, F: Fn(&[T], T) -> Result<Vec<T>>>(f: &F, x: &[T], t: T) -> Result<Vec<T>> {
    let v = f(x, t)?;
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!("vector field is not finite at t = {t}")));
    }
    Ok(v)
}

/// The drift and dither input fields of the transformed loop on the packed
/// state `[θ_f…, η_f]`.
#[derive(Debug, Clone, Copy)]
pub struct TransformedFields<'a, T> {
    params: &'a EsParams<T>,
    map: &'a CostMap<T>,
}

impl<'a, T: Scalar> TransformedFields<'a, T> {
    pub fn new(params: &'a EsParams<T>, map: &'a CostMap<T>) -> Result<Self> {
        params.check_against(map)?;
        if map.optimum().is_none() {
            return Err(Error::Capability(format!("map '{}' has no declared optimum", map.name())));
        }
        Ok(Self { params, map })
    }

    fn n(&self) -> usize {
        self.params.channels()
    }

    /// Drift `b₀`.
    pub fn drift(&self, x: &[T], t: T) -> Result<Vec<T>> {
        let n = self.n();
        let mut buf = Vec::with_capacity(n);
        let s = scaled_terms(&self.params.schedule, self.map, &x[..n], t, &mut buf)?;
        let two_kappa = T::lit(2.0 * self.map.kappa() as f64);
        let mut out: Vec<T> = x[..n].iter().map(|&v| s.growth * v).collect();
        out.push((two_kappa * s.growth - self.params.omega_h) * x[n] + self.params.omega_h * s.scale * s.jf);
        Ok(out)
    }

    fn phase(&self, i: usize, x: &[T], t: T) -> Result<T> {
        let n = self.n();
        let mut buf = Vec::with_capacity(n);
        let s = scaled_terms(&self.params.schedule, self.map, &x[..n], t, &mut buf)?;
        crate::controllers::phase_term(self.params.k[i], s.log_phi, s.jf - x[n] / s.scale, t)
    }

    /// `b_c,i = √αᵢ eᵢ cos ρᵢ`.
    pub fn cos_field(&self, i: usize, x: &[T], t: T) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n() + 1];
        out[i] = self.params.alpha[i].sqrt() * self.phase(i, x, t)?.cos();
        Ok(out)
    }

    /// `b_s,i = √αᵢ eᵢ sin ρᵢ`.
    pub fn sin_field(&self, i: usize, x: &[T], t: T) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n() + 1];
        out[i] = self.params.alpha[i].sqrt() * self.phase(i, x, t)?.sin();
        Ok(out)
    }

    /// Closed form of `[b_c,i, b_s,i]`: `kᵢ αᵢ φ eᵢ ∂J_f/∂θ_f,i`.
    pub fn bracket_closed_form(&self, i: usize, x: &[T], t: T) -> Result<Vec<T>> {
        let n = self.n();
        let grad = scaled_gradient(self.params, self.map, &x[..n], t)?;
        let phi = self.params.schedule.phi(t)?;
        let mut out = vec![T::zero(); n + 1];
        out[i] = self.params.k[i] * self.params.alpha[i] * phi * grad[i];
        Ok(out)
    }

    /// `b₀ - ½ Σᵢ [b_c,i, b_s,i]` with numerically differentiated brackets.
    pub fn averaged_by_brackets(&self, x: &[T], t: T, h: T) -> Result<Vec<T>> {
        let mut out = self.drift(x, t)?;
        let half = T::lit(0.5);
        for i in 0..self.n() {
            let br = lie_bracket(|z, s| self.cos_field(i, z, s), |z, s| self.sin_field(i, z, s), x, t, h)?;
            for (o, b) in out.iter_mut().zip(br) {
                *o = *o - half * b;
            }
        }
        Ok(out)
    }
}

/// `∂J_f/∂θ_f = ∇J(θ* + θ_f/ξ) / ξ`.
fn scaled_gradient<T: Scalar>(p: &EsParams<T>, map: &CostMap<T>, theta_f: &[T], t: T) -> Result<Vec<T>> {
    let xi = p.schedule.xi(t)?;
    let offset: Vec<T> = theta_f.iter().map(|&v| v / xi).collect();
    Ok(map.centered_gradient(&offset)?.into_iter().map(|g| g / xi).collect())
}

/// Averaged vector field for any schedule kind on `[θ̄_f…, η̄_f]`.
pub fn averaged_rhs_into<T: Scalar>(p: &EsParams<T>, map: &CostMap<T>, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
    let n = p.channels();
    let mut buf = Vec::with_capacity(n);
    let s = scaled_terms(&p.schedule, map, &x[..n], t, &mut buf)?;
    let grad = scaled_gradient(p, map, &x[..n], t)?;
    let phi = p.schedule.phi(t)?;
    let half = T::lit(0.5);
    for i in 0..n {
        dx[i] = s.growth * x[i] - half * p.k[i] * p.alpha[i] * phi * grad[i];
    }
    let two_kappa = T::lit(2.0 * map.kappa() as f64);
    dx[n] = (two_kappa * s.growth - p.omega_h) * x[n] + p.omega_h * s.scale * s.jf;
    Ok(())
}

fn averaged_checked<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    s: &TransformedState<T>,
    t: T,
) -> Result<(Vec<T>, T)> {
    p.check_against(map)?;
    if s.theta_f.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: s.theta_f.len() });
    }
    let mut x = s.theta_f.clone();
    x.push(s.eta_f);
    let mut dx = vec![T::zero(); x.len()];
    averaged_rhs_into(p, map, t, &x, &mut dx)?;
    let eta = dx.pop().expect("packed state has filter slot");
    Ok((dx, eta))
}

/// Averaged system of the asymptotic loop.
pub fn averaged_asymptotic_rhs<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    s: &TransformedState<T>,
    t: T,
) -> Result<(Vec<T>, T)> {
    if !matches!(p.schedule.kind(), ScheduleKind::Asymptotic { .. }) {
        return Err(Error::Capability("averaged_asymptotic_rhs needs an asymptotic schedule".into()));
    }
    if map.optimum().is_none() {
        return Err(Error::Capability(format!("map '{}' has no declared optimum", map.name())));
    }
    averaged_checked(p, map, s, t)
}

/// Averaged system of the exponential loop (κ = 1 only).
pub fn averaged_exponential_rhs<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    s: &TransformedState<T>,
    t: T,
) -> Result<(Vec<T>, T)> {
    if !matches!(p.schedule.kind(), ScheduleKind::Exponential { .. }) {
        return Err(Error::Capability("averaged_exponential_rhs needs an exponential schedule".into()));
    }
    if map.kappa() != 1 {
        return Err(Error::Capability(format!(
            "exponential averaging is defined for kappa = 1 only (map '{}' has {})",
            map.name(),
            map.kappa()
        )));
    }
    if map.optimum().is_none() {
        return Err(Error::Capability(format!("map '{}' has no declared optimum", map.name())));
    }
    averaged_checked(p, map, s, t)
}

/// The averaged system as an integrable system. It carries no dither, so no
/// step ceiling applies.
#[derive(Debug, Clone, Copy)]
pub struct AveragedLoop<'a, T> {
    params: &'a EsParams<T>,
    map: &'a CostMap<T>,
}

impl<'a, T: Scalar> AveragedLoop<'a, T> {
    pub fn new(params: &'a EsParams<T>, map: &'a CostMap<T>) -> Result<Self> {
        params.check_against(map)?;
        if map.optimum().is_none() {
            return Err(Error::Capability(format!("map '{}' has no declared optimum", map.name())));
        }
        if matches!(params.schedule.kind(), ScheduleKind::Exponential { .. }) && map.kappa() != 1 {
            return Err(Error::Capability("exponential averaging is defined for kappa = 1 only".into()));
        }
        Ok(Self { params, map })
    }
}

impl<T: Scalar> OdeSystem<T> for AveragedLoop<'_, T> {
    fn dim(&self) -> usize {
        self.params.channels() + 1
    }

    fn rhs(&self, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
        averaged_rhs_into(self.params, self.map, t, x, dx)
    }
}

/// Step that puts `steps` RK4 steps into one period of the fastest dither.
pub fn dither_step<T: Scalar>(p: &EsParams<T>, steps: usize) -> T {
    T::TAU() / p.max_frequency() / T::from_count(steps)
}

/// Sup over sample times of `|x(t) - x̄(t)|` between the transformed loop and
/// its averaged system, both started from `(θ_f0, η_f0)` at the schedule
/// start and integrated with the same step.
pub fn averaging_gap<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    start: &TransformedState<T>,
    horizon: T,
    steps_per_period: usize,
) -> Result<T> {
    let full = crate::controllers::TransformedLoop::new(p, map)?;
    let avg = AveragedLoop::new(p, map)?;
    let mut x0 = start.theta_f.clone();
    x0.push(start.eta_f);
    let t0 = p.schedule.t0();
    let dt = dither_step(p, steps_per_period);
    let a = integrate(&full, &x0, t0, t0 + horizon, dt, 1)?;
    let b = integrate(&avg, &x0, t0, t0 + horizon, dt, 1)?;
    Ok(sup_gap(&a, &b))
}

fn sup_gap<T: Scalar>(a: &Solution<T>, b: &Solution<T>) -> T {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| distance(x, y))
        .fold(T::zero(), T::max)
}

/// Settings of the empirical practical-stability probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig<T> {
    pub omega_values: Vec<T>,
    /// Radius of the target neighbourhood of `θ*`.
    pub epsilon: T,
    /// Radius of the initial-condition ball around `θ*`.
    pub delta: T,
    pub horizon: T,
    pub trials: usize,
    pub seed: u64,
    pub steps_per_period: usize,
}

impl<T: Scalar> ProbeConfig<T> {
    pub fn new(omega_values: Vec<T>, epsilon: T, delta: T, horizon: T, trials: usize, seed: u64) -> Result<Self> {
        let cfg = Self { omega_values, epsilon, delta, horizon, trials, seed, steps_per_period: STEPS_PER_PERIOD };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_values.is_empty() {
            return Err(invalid("probe.omega needs at least one frequency"));
        }
        if self.omega_values.iter().any(|w| !(*w > T::zero() && w.is_finite())) {
            return Err(invalid("probe.omega values must be positive"));
        }
        if self.omega_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("probe.omega values must be strictly ascending"));
        }
        if !(self.epsilon > T::zero()) || !(self.delta > T::zero()) {
            return Err(invalid("probe.epsilon and probe.delta must be positive"));
        }
        if self.epsilon > self.delta {
            return Err(invalid(format!(
                "probe.epsilon ({}) must not exceed probe.delta ({})",
                self.epsilon, self.delta
            )));
        }
        if !(self.horizon > T::zero() && self.horizon.is_finite()) {
            return Err(invalid("probe.horizon must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("probe.trials must be at least 1"));
        }
        if self.steps_per_period < STEPS_PER_PERIOD {
            return Err(invalid(format!("probe needs at least {STEPS_PER_PERIOD} steps per period")));
        }
        Ok(())
    }
}

/// One `(ω, trial)` outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow<T> {
    pub omega: T,
    pub trial: usize,
    pub theta0: Vec<T>,
    /// First period-boundary time inside the ε-neighbourhood.
    pub entry_time: Option<T>,
    /// Inside at every period boundary from the entry on.
    pub stayed: bool,
    /// Sup-norm distance in scaled coordinates between full and averaged runs.
    pub sup_gap: Option<T>,
    /// Set when the full or averaged integration failed.
    pub failure: Option<String>,
}

/// Runs one trial at frequency `omega` from `(θ0, η0)`.
pub fn probe_trial<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    omega: T,
    theta0: &[T],
    eta0: T,
    cfg: &ProbeConfig<T>,
) -> Result<ProbeRow<T>> {
    let opt = map
        .optimum()
        .ok_or_else(|| Error::Capability(format!("map '{}' has no declared optimum", map.name())))?
        .to_vec();
    let params = EsParams { omega, ..p.clone() };
    let full = ClosedLoop::new(&params, map)?;
    let avg = AveragedLoop::new(&params, map)?;
    let t0 = params.schedule.t0();
    let t1 = t0 + cfg.horizon;
    let dt = dither_step(&params, cfg.steps_per_period);
    let n = map.dim();

    let mut x0 = theta0.to_vec();
    x0.push(eta0);
    let (full_sol, mut failure) = match integrate(&full, &x0, t0, t1, dt, 1) {
        Ok(s) => (s, None),
        Err(d) => (d.partial, Some(d.error.to_string())),
    };

    let start = to_transformed(&params.schedule, map, &EsState { theta: theta0.to_vec(), eta: eta0 }, t0)?;
    let mut xa = start.theta_f.clone();
    xa.push(start.eta_f);
    let avg_sol = match integrate(&avg, &xa, t0, t1, dt, 1) {
        Ok(s) => Some(s),
        Err(d) => {
            failure.get_or_insert_with(|| format!("averaged run: {}", d.error));
            None
        }
    };

    // period-boundary membership in the ε-neighbourhood
    let mut entry_time = None;
    let mut stayed = false;
    let last = full_sol.len().saturating_sub(1);
    for (k, (t, s)) in full_sol.times.iter().zip(&full_sol.states).enumerate() {
        if k % cfg.steps_per_period != 0 && k != last {
            continue;
        }
        let inside = distance(&s[..n], &opt) < cfg.epsilon;
        match (entry_time, inside) {
            (None, true) => {
                entry_time = Some(*t);
                stayed = true;
            }
            (Some(_), false) => stayed = false,
            _ => {}
        }
    }
    if failure.is_some() {
        stayed = false;
    }

    let sup_gap = match (&avg_sol, failure.is_none()) {
        (Some(a), true) => {
            let mut worst = T::zero();
            for (k, s) in full_sol.states.iter().enumerate() {
                let st = EsState { theta: s[..n].to_vec(), eta: s[n] };
                let tf = to_transformed(&params.schedule, map, &st, full_sol.times[k])?;
                let mut v = tf.theta_f;
                v.push(tf.eta_f);
                worst = worst.max(distance(&v, &a.states[k]));
            }
            Some(worst)
        }
        _ => None,
    };

    Ok(ProbeRow { omega, trial: 0, theta0: theta0.to_vec(), entry_time, stayed, sup_gap, failure })
}

/// Runs every `(ω, trial)` pair. Initial conditions are drawn once from the
/// seed, uniformly in the open δ-ball around `θ*`, with the filter started
/// at `η(t0) = J(θ(t0))`; trial `j` uses the same start for every `ω`.
/// Rows come back ordered by `(ω, trial)`.
pub fn practical_stability_probe<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    cfg: &ProbeConfig<T>,
) -> Result<Vec<ProbeRow<T>>> {
    cfg.validate()?;
    p.check_against(map)?;
    let opt = map
        .optimum()
        .ok_or_else(|| Error::Capability(format!("map '{}' has no declared optimum", map.name())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<T>> = (0..cfg.trials)
        .map(|_| {
            sample_in_ball(&mut rng, map.dim(), cfg.delta.as_f64())
                .into_iter()
                .zip(opt)
                .map(|(d, &o)| o + T::lit(d))
                .collect()
        })
        .collect();
    let jobs: Vec<(T, usize)> = cfg
        .omega_values
        .iter()
        .flat_map(|&w| (0..cfg.trials).map(move |j| (w, j)))
        .collect();
    jobs.par_iter()
        .map(|&(w, j)| {
            let theta0 = &starts[j];
            let eta0 = map.eval(theta0)?;
            let mut row = probe_trial(p, map, w, theta0, eta0, cfg)?;
            row.trial = j;
            Ok(row)
        })
        .collect()
}

/// CSV with columns `omega,trial,entry_time,stayed,sup_gap`; missing values
/// are left empty.
pub fn probe_csv<T: Scalar>(rows: &[ProbeRow<T>]) -> String {
    let mut out = String::from("omega,trial,entry_time,stayed,sup_gap\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt17(r.omega),
            r.trial,
            r.entry_time.map(fmt17).unwrap_or_default(),
            u8::from(r.stayed),
            r.sup_gap.map(fmt17).unwrap_or_default()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::Schedule;
    use crate::sim::Trajectory;
    use proptest::prelude::*;

    fn asym(omega: f64) -> EsParams<f64> {
        let s = Schedule::asymptotic(0.1, 1.0 / 3.0, 4.0, 0.0).unwrap();
        EsParams::new(vec![1.0], vec![0.3], vec![1.0], omega, 3.0, s).unwrap()
    }

    fn expo() -> EsParams<f64> {
        let s = Schedule::exponential(0.1, 0.0).unwrap();
        EsParams::new(vec![1.0], vec![1.0], vec![1.0], 50.0, 3.0, s).unwrap()
    }

    fn field_x(x: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(vec![x[0]])
    }

    fn field_x2(x: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(vec![x[0] * x[0]])
    }

    #[test]
    fn scalar_bracket() {
        let b = lie_bracket(field_x, field_x2, &[2.0], 0.0, 1e-6).unwrap();
        assert!((b[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_fields_commute() {
        let f = |_x: &[f64], _t: f64| Ok(vec![1.0, -2.0]);
        let g = |_x: &[f64], _t: f64| Ok(vec![0.5, 3.0]);
        let b = lie_bracket(f, g, &[0.3, 7.0], 1.0, 1e-6).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn bracket_rejects_nonfinite_fields() {
        let f = |_x: &[f64], _t: f64| Ok(vec![f64::NAN]);
        assert!(matches!(lie_bracket(f, field_x, &[1.0], 0.0, 1e-6), Err(Error::Numeric(_))));
        assert!(lie_bracket(field_x, field_x, &[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn averaged_asymptotic_hand_value() {
        let s = TransformedState { theta_f: vec![1.0], eta_f: 0.0 };
        let (th, eta) = averaged_asymptotic_rhs(&asym(5.0), &CostMap::quartic_paper(), &s, 0.0).unwrap();
        assert!((th[0] + 0.3).abs() < 1e-12, "{}", th[0]);
        assert!((eta - 3.0).abs() < 1e-12);
    }

    #[test]
    fn averaged_origin_is_equilibrium() {
        let origin = TransformedState { theta_f: vec![0.0], eta_f: 0.0 };
        for &t in &[0.0, 3.0, 50.0] {
            let (th, eta) = averaged_asymptotic_rhs(&asym(5.0), &CostMap::quartic_paper(), &origin, t).unwrap();
            assert_eq!((th[0], eta), (0.0, 0.0));
            let quad = CostMap::quadratic(vec![1.0], vec![1.0]).unwrap();
            let (th, eta) = averaged_exponential_rhs(&expo(), &quad, &origin, t).unwrap();
            assert_eq!((th[0], eta), (0.0, 0.0));
        }
    }

    #[test]
    fn averaged_exponential_hand_value() {
        let quad = CostMap::quadratic(vec![1.0], vec![1.0]).unwrap();
        let s = TransformedState { theta_f: vec![1.0], eta_f: 0.0 };
        for &t in &[0.0, 4.0] {
            let (th, eta) = averaged_exponential_rhs(&expo(), &quad, &s, t).unwrap();
            assert!((th[0] + 0.9).abs() < 1e-12);
            assert!((eta - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn averaged_schedule_mismatch() {
        let quad = CostMap::quadratic(vec![1.0], vec![1.0]).unwrap();
        let s = TransformedState { theta_f: vec![1.0], eta_f: 0.0 };
        assert!(matches!(averaged_exponential_rhs(&asym(5.0), &quad, &s, 0.0), Err(Error::Capability(_))));
        assert!(matches!(averaged_asymptotic_rhs(&expo(), &quad, &s, 0.0), Err(Error::Capability(_))));
    }

    #[test]
    fn exponential_averaging_needs_kappa_one() {
        let s = Schedule::exponential(0.1, 0.0).unwrap();
        let p = EsParams::uniform(1, 1.0, 1.0, 50.0, 3.0, s).unwrap();
        let quart = CostMap::quartic_paper();
        let st = TransformedState { theta_f: vec![1.0], eta_f: 0.0 };
        assert!(matches!(averaged_exponential_rhs(&p, &quart, &st, 0.0), Err(Error::Capability(_))));
    }

    #[test]
    fn unforced_filter_decays_exponentially() {
        let quad = CostMap::quadratic(vec![1.0], vec![1.0]).unwrap();
        let p = expo();
        let sys = AveragedLoop::new(&p, &quad).unwrap();
        let sol = integrate(&sys, &[0.0, 1.0], 0.0, 5.0, 1e-3, 100).unwrap();
        for (t, s) in sol.times.iter().zip(&sol.states) {
            assert_eq!(s[0], 0.0);
            assert!((s[1] - ((0.2 - 3.0) * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn quartic_lyapunov_identity() {
        let map = CostMap::quartic_paper();
        let sched = asym(5.0).schedule;
        for &t in &[0.0, 2.5, 40.0] {
            for &th in &[-1.0, 0.25, 1.7] {
                let xi: f64 = sched.xi(t).unwrap();
                let v = xi.powi(4) * map.centered_eval(&[th / xi]).unwrap();
                assert!((v - th.powi(4)).abs() < 1e-13 * th.powi(4).max(1.0));
            }
        }
    }

    #[test]
    fn bracket_of_transformed_fields_has_closed_form() {
        let map = CostMap::quartic_paper();
        let p = asym(5.0);
        let fields = TransformedFields::new(&p, &map).unwrap();
        for &(th, eta, t) in &[(0.7, 0.1, 1.0), (-1.2, 0.5, 3.3), (0.3, -0.4, 7.0)] {
            let x = [th, eta];
            let num = lie_bracket(
                |z, s| fields.cos_field(0, z, s),
                |z, s| fields.sin_field(0, z, s),
                &x,
                t,
                BRACKET_STEP,
            )
            .unwrap();
            let closed = fields.bracket_closed_form(0, &x, t).unwrap();
            assert!((num[0] - closed[0]).abs() < 1e-5 * (1.0 + closed[0].abs()), "{num:?} {closed:?}");
            assert_eq!(num[1], 0.0);
        }
    }

    proptest! {
        #[test]
        fn bracket_is_antisymmetric(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.0f64..5.0) {
            let f = |x: &[f64], t: f64| Ok(vec![x[0] * x[1] + t, (x[0]).sin()]);
            let g = |x: &[f64], _t: f64| Ok(vec![x[1] * x[1], x[0] - 2.0 * x[1]]);
            let fg = lie_bracket(f, g, &[a, b], t, BRACKET_STEP).unwrap();
            let gf = lie_bracket(g, f, &[a, b], t, BRACKET_STEP).unwrap();
            for (u, v) in fg.iter().zip(&gf) {
                prop_assert!((u + v).abs() < 1e-9);
            }
        }

        #[test]
        fn averaged_field_equals_bracket_average(
            a in -1.5f64..1.5, b in -1.5f64..1.5, eta in -1.0f64..1.0, t in 0.0f64..10.0,
        ) {
            let s = Schedule::asymptotic(0.2, 1.5, 1.0, 0.0).unwrap();
            let p = EsParams::new(vec![1.0, 0.5], vec![0.3, 0.7], vec![1.0, 1.5], 5.0, 3.0, s).unwrap();
            let map = CostMap::quadratic(vec![1.0, 2.0], vec![0.5, -1.0]).unwrap();
            let fields = TransformedFields::new(&p, &map).unwrap();
            let x = [a, b, eta];
            let by_brackets = fields.averaged_by_brackets(&x, t, BRACKET_STEP).unwrap();
            let mut closed = [0.0; 3];
            averaged_rhs_into(&p, &map, t, &x, &mut closed).unwrap();
            for (u, v) in by_brackets.iter().zip(&closed) {
                prop_assert!((u - v).abs() < 1e-5 * (1.0 + v.abs()));
            }
            for i in 0..2 {
                let br = lie_bracket(|z, s| fields.cos_field(i, z, s), |z, s| fields.sin_field(i, z, s), &x, t, BRACKET_STEP).unwrap();
                prop_assert_eq!(br[2], 0.0);
            }
        }
    }

    fn probe_cfg(omegas: Vec<f64>, eps: f64, delta: f64, horizon: f64, trials: usize) -> ProbeConfig<f64> {
        ProbeConfig::new(omegas, eps, delta, horizon, trials, 42).unwrap()
    }

    #[test]
    fn probe_config_validation() {
        assert!(ProbeConfig::new(vec![], 0.1, 1.0, 5.0, 1, 0).is_err());
        assert!(ProbeConfig::new(vec![50.0, 10.0], 0.1, 1.0, 5.0, 1, 0).is_err());
        assert!(ProbeConfig::new(vec![10.0], 2.0, 1.0, 5.0, 1, 0).is_err());
        assert!(ProbeConfig::new(vec![10.0], 0.1, 1.0, 5.0, 0, 0).is_err());
        assert!(ProbeConfig::new(vec![10.0], 1.0, 1.0, 5.0, 1, 0).is_ok());
    }

    #[test]
    fn probe_with_epsilon_equal_delta_enters_at_start() {
        let map = CostMap::quartic_paper();
        let rows = practical_stability_probe(&asym(10.0), &map, &probe_cfg(vec![10.0], 0.5, 0.5, 2.0, 3)).unwrap();
        assert_eq!(rows.len(), 3);
        for (j, r) in rows.iter().enumerate() {
            assert_eq!(r.trial, j);
            assert_eq!(r.entry_time, Some(0.0));
            assert!(r.sup_gap.is_some());
        }
    }

    #[test]
    fn degenerate_trial_stays_near_optimum() {
        let map = CostMap::quartic_paper();
        let cfg = probe_cfg(vec![10.0, 50.0, 250.0], 1.0, 1.0, 10.0, 1);
        for &w in &cfg.omega_values {
            let row = probe_trial(&asym(10.0), &map, w, &[2.0], 1.0, &cfg).unwrap();
            assert_eq!(row.entry_time, Some(0.0));
            assert!(row.stayed, "left the neighbourhood at omega = {w}");
        }
    }

    #[test]
    fn probe_gap_shrinks_with_frequency() {
        let map = CostMap::quartic_paper();
        let rows = practical_stability_probe(&asym(10.0), &map, &probe_cfg(vec![10.0, 50.0, 250.0], 0.2, 1.0, 10.0, 2)).unwrap();
        for j in 0..2 {
            let gaps: Vec<f64> = rows.iter().filter(|r| r.trial == j).map(|r| r.sup_gap.unwrap()).collect();
            assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        }
        let csv = probe_csv(&rows);
        assert_eq!(csv.lines().next(), Some("omega,trial,entry_time,stayed,sup_gap"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn probe_is_deterministic() {
        let map = CostMap::quartic_paper();
        let cfg = probe_cfg(vec![10.0, 20.0], 0.3, 0.8, 3.0, 4);
        let a = practical_stability_probe(&asym(10.0), &map, &cfg).unwrap();
        let b = practical_stability_probe(&asym(10.0), &map, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gap_helper_matches_transformed_trajectory_shape() {
        let map = CostMap::quartic_paper();
        let p = asym(10.0);
        let start = TransformedState { theta_f: vec![1.0], eta_f: 0.0 };
        let gap = averaging_gap(&p, &map, &start, 2.0, 40).unwrap();
        assert!(gap > 0.0 && gap < 1.0);
        let sys = crate::controllers::TransformedLoop::new(&p, &map).unwrap();
        let sol = integrate(&sys, &[1.0, 0.0], 0.0, 1.0, dither_step(&p, 40), 10).unwrap();
        let tr = Trajectory::from_transformed_solution(&sol, 1).unwrap();
        tr.validate().unwrap();
    }
}
