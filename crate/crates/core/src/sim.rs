//! Fixed-step RK4 integration, trajectory records and the closed-form
//! solution of the power-law comparison ODE
//! `V' = -ε₁ (1+β(t-t0))^(-p) V^q + ε₂ (1+β(t-t0))^(-1) V`.

use crate::error::{invalid, Error, Result};
use crate::maps::CostMap;
use crate::scalar::Scalar;

/// Minimum number of RK4 steps per period of the fastest dither.
pub const STEPS_PER_PERIOD: usize = 40;

/// An explicit ODE `ẋ = f(t, x)`.
pub trait OdeSystem<T> {
    fn dim(&self) -> usize;

    fn rhs(&self, t: T, x: &[T], dx: &mut [T]) -> Result<()>;

    /// Largest angular frequency forced into the system, if any. Used to
    /// enforce the step-size ceiling.
    fn max_frequency(&self) -> Option<T> {
        None
    }
}

/// Adapter for plain closures.
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T: Scalar, F> OdeSystem<T> for FnSystem<F>
where
    F: Fn(T, &[T], &mut [T]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
        (self.f)(t, x, dx)
    }
}

/// Sampled solution of an [`OdeSystem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

impl<T: Scalar> Solution<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[T] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Component `i` of every sample.
    pub fn component(&self, i: usize) -> Vec<T> {
        self.states.iter().map(|s| s[i]).collect()
    }
}

/// A run that stopped early. `partial` holds every finite sample recorded up
/// to and including `last_good_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diverged<T> {
    pub partial: Solution<T>,
    pub error: Error,
}

impl<T> From<Diverged<T>> for Error {
    fn from(d: Diverged<T>) -> Self {
        d.error
    }
}

/// Fixed-step step grid on `[t0, t1]`: returns the step count. The last
/// step is shortened when `dt` does not divide the span.
fn step_count<T: Scalar>(t0: T, t1: T, dt: T) -> usize {
    let ratio = ((t1 - t0) / dt).as_f64();
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest.max(1.0) as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Classical RK4 with fixed step `dt`, sampling every `record_every` steps.
/// The initial and final states are always recorded.
pub fn integrate<T: Scalar, S: OdeSystem<T> + ?Sized>(
    sys: &S,
    x0: &[T],
    t0: T,
    t1: T,
    dt: T,
    record_every: usize,
) -> Result<Solution<T>, Diverged<T>> {
    let fail = |error: Error| Diverged { partial: Solution { times: vec![], states: vec![] }, error };
    let n = sys.dim();
    if x0.len() != n {
        return Err(fail(Error::DimensionMismatch { expected: n, got: x0.len() }));
    }
    if !(t1 > t0) {
        return Err(fail(invalid(format!("integration needs t1 > t0 (got {t0} .. {t1})"))));
    }
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(fail(invalid(format!("step size must be positive, got {dt}"))));
    }
    if record_every == 0 {
        return Err(fail(invalid("record_every must be at least 1")));
    }
    if let Some(w) = sys.max_frequency() {
        let ceiling = T::TAU() / w / T::from_count(STEPS_PER_PERIOD);
        // tolerate the rounding of a step computed as exactly 2π/(40 ω)
        if dt > ceiling * (T::one() + T::lit(1e-9)) {
            return Err(fail(invalid(format!(
                "step {dt} exceeds {STEPS_PER_PERIOD} steps per dither period (max {ceiling})"
            ))));
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(fail(Error::Numeric("non-finite initial state".into())));
    }

    let steps = step_count(t0, t1, dt);
    let mut out = Solution { times: vec![t0], states: vec![x0.to_vec()] };
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    let mut tmp = vec![T::zero(); n];
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let two = T::lit(2.0);
    let mut t = t0;

    for step in 1..=steps {
        let t_next = if step == steps { t1 } else { t0 + T::from_count(step) * dt };
        let h = t_next - t;
        let result: Result<()> = (|| {
            sys.rhs(t, &x, &mut k1)?;
            for i in 0..n {
                tmp[i] = x[i] + half * h * k1[i];
            }
            sys.rhs(t + half * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = x[i] + half * h * k2[i];
            }
            sys.rhs(t + half * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            sys.rhs(t_next, &tmp, &mut k4)?;
            for i in 0..n {
                tmp[i] = x[i] + h * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            }
            if tmp.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { last_good_time: t.as_f64() });
            }
            Ok(())
        })();
        if let Err(error) = result {
            if out.times.last() != Some(&t) {
                out.times.push(t);
                out.states.push(x.clone());
            }
            return Err(Diverged { partial: out, error });
        }
        std::mem::swap(&mut x, &mut tmp);
        t = t_next;
        if step % record_every == 0 || step == steps {
            out.times.push(t);
            out.states.push(x.clone());
        }
    }
    Ok(out)
}

/// Time-indexed record of `(t, θ, η, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub theta: Vec<Vec<T>>,
    pub eta: Vec<T>,
    pub y: Vec<T>,
    /// Parameter echo, `(key, value)` pairs.
    pub meta: Vec<(String, String)>,
}

impl<T: Scalar> Trajectory<T> {
    /// Unpacks `[θ…, η]` states and evaluates `y = J(θ)` per sample.
    pub fn from_solution(sol: &Solution<T>, map: &CostMap<T>) -> Result<Self> {
        let n = map.dim();
        let mut theta = Vec::with_capacity(sol.len());
        let mut eta = Vec::with_capacity(sol.len());
        let mut y = Vec::with_capacity(sol.len());
        for s in &sol.states {
            if s.len() != n + 1 {
                return Err(Error::DimensionMismatch { expected: n + 1, got: s.len() });
            }
            theta.push(s[..n].to_vec());
            eta.push(s[n]);
            y.push(map.eval(&s[..n])?);
        }
        Ok(Self { times: sol.times.clone(), theta, eta, y, meta: Vec::new() })
    }

    /// Unpacks `[θ_f…, η_f]` states of a transformed run; `y` is left as
    /// `NaN` because the output is not defined in those coordinates.
    pub fn from_transformed_solution(sol: &Solution<T>, n: usize) -> Result<Self> {
        let mut theta = Vec::with_capacity(sol.len());
        let mut eta = Vec::with_capacity(sol.len());
        for s in &sol.states {
            if s.len() != n + 1 {
                return Err(Error::DimensionMismatch { expected: n + 1, got: s.len() });
            }
            theta.push(s[..n].to_vec());
            eta.push(s[n]);
        }
        Ok(Self { times: sol.times.clone(), theta, eta, y: vec![T::nan(); sol.len()], meta: Vec::new() })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    /// Index of the sample closest to `t`.
    pub fn index_near(&self, t: T) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (*a.1 - t).abs().partial_cmp(&(*b.1 - t).abs()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
    }

    /// Checks equal lengths and strictly increasing times.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.theta.len() != n || self.eta.len() != n || self.y.len() != n {
            return Err(invalid("trajectory columns have different lengths"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("trajectory times are not strictly increasing"));
        }
        Ok(())
    }

    /// CSV with header `t,theta_1..theta_n,eta,y`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",theta_{i}"));
        }
        out.push_str(",eta,y\n");
        for k in 0..self.len() {
            out.push_str(&fmt17(self.times[k]));
            for v in &self.theta[k] {
                out.push(',');
                out.push_str(&fmt17(*v));
            }
            out.push(',');
            out.push_str(&fmt17(self.eta[k]));
            out.push(',');
            out.push_str(&fmt17(self.y[k]));
            out.push('\n');
        }
        out
    }
}

/// Full-precision float formatting (17 significant digits).
pub fn fmt17<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// Parameters of the power-law comparison ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Params<T> {
    pub beta: T,
    pub eps1: T,
    pub eps2: T,
    pub p: T,
    pub q: T,
    pub v0: T,
    pub t0: T,
}

impl<T: Scalar> Lemma1Params<T> {
    pub fn new(beta: T, eps1: T, eps2: T, p: T, q: T, v0: T, t0: T) -> Result<Self> {
        for (name, v) in [("beta", beta), ("eps1", eps1), ("eps2", eps2), ("v0", v0)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(p < T::one()) {
            return Err(invalid(format!("p must be < 1, got {p}")));
        }
        if !(q > T::one() && q.is_finite()) {
            return Err(invalid(format!("q must be > 1, got {q}")));
        }
        if !(t0 >= T::zero() && t0.is_finite()) {
            return Err(invalid(format!("t0 must be >= 0, got {t0}")));
        }
        let out = Self { beta, eps1, eps2, p, q, v0, t0 };
        if !(out.eps3() > T::zero()) {
            return Err(invalid("derived constant eps3 must be positive"));
        }
        Ok(out)
    }

    /// `(ε₁(q-1)/β) / (ε₂(q-1)/β + 1 - p)`.
    pub fn eps3(&self) -> T {
        let qm1 = self.q - T::one();
        (self.eps1 * qm1 / self.beta) / (self.eps2 * qm1 / self.beta + T::one() - self.p)
    }
}

pub fn lemma1_rhs<T: Scalar>(p: &Lemma1Params<T>, v: T, t: T) -> T {
    let s = T::one() + p.beta * (t - p.t0);
    -p.eps1 * s.powf(-p.p) * v.powf(p.q) + p.eps2 / s * v
}

pub fn lemma1_solution<T: Scalar>(p: &Lemma1Params<T>, t: T) -> Result<T> {
    if !(t >= p.t0) {
        return Err(invalid(format!("time {t} precedes t0 = {}", p.t0)));
    }
    let qm1 = p.q - T::one();
    let s = T::one() + p.beta * (t - p.t0);
    let growth = p.eps2 * qm1 / p.beta;
    let e3 = p.eps3();
    let denom = p.v0.powf(-qm1) + e3 * s.powf(growth + T::one() - p.p) - e3;
    if !(denom > T::zero()) {
        return Err(Error::Numeric(format!("closed-form denominator {denom} is not positive at t = {t}")));
    }
    Ok((s.powf(growth) / denom).powf(T::one() / qm1))
}

/// The comparison ODE as an integrable system.
#[derive(Debug, Clone, Copy)]
pub struct Lemma1System<T> {
    pub params: Lemma1Params<T>,
}

impl<T: Scalar> OdeSystem<T> for Lemma1System<T> {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
        dx[0] = lemma1_rhs(&self.params, x[0], t);
        Ok(())
    }
}

/// Report of the RK4-versus-closed-form comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Check<T> {
    pub max_rel_error: T,
    pub worst_time: T,
    pub samples: usize,
}

/// Integrates the comparison ODE with RK4 on `[t0, t1]` and compares each
/// recorded sample against the closed form.
pub fn lemma1_check<T: Scalar>(p: &Lemma1Params<T>, t1: T, dt: T, record_every: usize) -> Result<Lemma1Check<T>> {
    let sys = Lemma1System { params: *p };
    let sol = integrate(&sys, &[p.v0], p.t0, t1, dt, record_every)?;
    let mut worst = (T::zero(), p.t0);
    for (t, s) in sol.times.iter().zip(&sol.states) {
        let exact = lemma1_solution(p, *t)?;
        let rel = (s[0] - exact).abs() / exact.abs();
        if !rel.is_finite() {
            return Err(Error::Numeric(format!("relative error undefined at t = {t}")));
        }
        if rel > worst.0 {
            worst = (rel, *t);
        }
    }
    Ok(Lemma1Check { max_rel_error: worst.0, worst_time: worst.1, samples: sol.len() })
}
