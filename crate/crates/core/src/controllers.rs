//! Closed-loop extremum-seeking dynamics.
//!
//! Channel `i` of the controller integrates
//!
//! ```text
//! θ̇ᵢ = ν(t) √(αᵢ ωᵢ) cos(ωᵢ t + kᵢ φ(t) (J(θ) - η))
//! η̇  = -ω_h η + ω_h J(θ)
//! ```
//!
//! with `ωᵢ = ω ω̂ᵢ`. The nominal schedule (`ν = φ = 1`) is the bounded
//! constant-gain baseline; asymptotic and exponential schedules give the
//! unbiased variants. [`transformed_rhs`] is the same loop written in the
//! scaled error coordinates `θ_f = ξ(θ - θ*)`, `η_f = ξ^{2κ}(η - J(θ*))`.

use crate::error::{invalid, Error, Result};
use crate::maps::CostMap;
use crate::scalar::Scalar;
use crate::schedules::{Schedule, ScheduleKind};
use crate::sim::OdeSystem;

/// Per-channel dither amplitudes, gains and frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EsParams<T> {
    pub alpha: Vec<T>,
    pub k: Vec<T>,
    pub omega_hat: Vec<T>,
    pub omega: T,
    pub omega_h: T,
    pub schedule: Schedule<T>,
}

/// Frequency ratios `1, 1.5, 2.25, …`.
pub fn default_omega_hat<T: Scalar>(n: usize) -> Vec<T> {
    (0..n).map(|i| T::lit(1.5).powi(i as i32)).collect()
}

impl<T: Scalar> EsParams<T> {
    pub fn new(
        alpha: Vec<T>,
        k: Vec<T>,
        omega_hat: Vec<T>,
        omega: T,
        omega_h: T,
        schedule: Schedule<T>,
    ) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(invalid("es.alpha must have at least one channel"));
        }
        for (key, v) in [("es.k", &k), ("es.omega_hat", &omega_hat)] {
            if v.len() != n {
                return Err(invalid(format!("{key} has {} entries, es.alpha has {n}", v.len())));
            }
        }
        for (key, v) in [("es.alpha", &alpha), ("es.k", &k), ("es.omega_hat", &omega_hat)] {
            if let Some(bad) = v.iter().find(|x| !(**x > T::zero() && x.is_finite())) {
                return Err(invalid(format!("{key} entries must be positive and finite, got {bad}")));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if omega_hat[i] == omega_hat[j] {
                    return Err(invalid(format!(
                        "es.omega_hat entries must be pairwise distinct (channels {} and {} share {})",
                        i + 1,
                        j + 1,
                        omega_hat[i]
                    )));
                }
            }
        }
        if !(omega > T::zero() && omega.is_finite()) {
            return Err(invalid(format!("es.omega must be > 0, got {omega}")));
        }
        if !(omega_h > T::zero() && omega_h.is_finite()) {
            return Err(invalid(format!("es.omega_h must be > 0, got {omega_h}")));
        }
        if let ScheduleKind::Exponential { lambda } = schedule.kind() {
            if !(omega_h > T::lit(2.0) * lambda) {
                return Err(invalid(format!(
                    "exponential schedule needs es.omega_h > 2 lambda ({omega_h} <= {})",
                    T::lit(2.0) * lambda
                )));
            }
        }
        Ok(Self { alpha, k, omega_hat, omega, omega_h, schedule })
    }

    /// Same value for every channel, default frequency ratios.
    pub fn uniform(n: usize, alpha: T, k: T, omega: T, omega_h: T, schedule: Schedule<T>) -> Result<Self> {
        Self::new(vec![alpha; n], vec![k; n], default_omega_hat(n), omega, omega_h, schedule)
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }

    /// `ωᵢ = ω ω̂ᵢ`.
    pub fn frequencies(&self) -> Vec<T> {
        self.omega_hat.iter().map(|&w| self.omega * w).collect()
    }

    pub fn max_frequency(&self) -> T {
        self.frequencies().into_iter().fold(T::zero(), T::max)
    }

    /// Period of the base dither `2π/ω`.
    pub fn base_period(&self) -> T {
        T::TAU() / self.omega
    }

    /// Checks the conditions that couple the parameters to a cost map.
    pub fn check_against(&self, map: &CostMap<T>) -> Result<()> {
        if map.dim() != self.channels() {
            return Err(Error::DimensionMismatch { expected: map.dim(), got: self.channels() });
        }
        let two_kappa = T::lit(2.0 * map.kappa() as f64);
        match self.schedule.kind() {
            ScheduleKind::Nominal => {}
            ScheduleKind::Asymptotic { v, r, .. } => {
                let gap = two_kappa - r;
                if !(gap >= T::zero()) {
                    return Err(invalid(format!(
                        "asymptotic schedule needs 2 kappa - r >= 0 (kappa = {}, r = {r})",
                        map.kappa()
                    )));
                }
                if !(v > gap) {
                    return Err(invalid(format!(
                        "asymptotic schedule needs v > 2 kappa - r (v = {v}, 2 kappa - r = {gap})"
                    )));
                }
            }
            ScheduleKind::Exponential { lambda } => {
                if map.kappa() != 1 {
                    return Err(invalid(format!(
                        "exponential schedule requires kappa = 1, map '{}' has kappa = {}",
                        map.name(),
                        map.kappa()
                    )));
                }
                if let Some(b) = map.bounds() {
                    let two = T::lit(2.0);
                    let floor = two * lambda * b.a2 * (two * b.a2 + b.b2) / (b.a1 * b.b1 * b.b1);
                    for (i, (&a, &k)) in self.alpha.iter().zip(&self.k).enumerate() {
                        if !(k * a > floor) {
                            return Err(invalid(format!(
                                "exponential schedule needs k_i alpha_i > {floor} (channel {} has {})",
                                i + 1,
                                k * a
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Controller input and washout filter state.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState<T> {
    pub theta: Vec<T>,
    pub eta: T,
}

/// Scaled error coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState<T> {
    pub theta_f: Vec<T>,
    pub eta_f: T,
}

/// `k φ(t) e`, formed in the log domain when `|e|` is tiny so a huge `φ`
/// never meets an underflowed `e`.
pub fn phase_term<T: Scalar>(k: T, log_phi: T, e: T, t: T) -> Result<T> {
    if e == T::zero() {
        return Ok(T::zero());
    }
    if e.abs() < T::lit(T::TINY) {
        return Ok(k * (log_phi + e.abs().ln()).exp() * e.signum());
    }
    let phi = log_phi.exp();
    if !phi.is_finite() {
        return Err(Error::Overflow { t: t.as_f64() });
    }
    Ok(k * phi * e)
}

/// Closed-loop vector field on the packed state `[θ₁ … θₙ, η]`.
pub fn es_rhs_into<T: Scalar>(p: &EsParams<T>, map: &CostMap<T>, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
    let n = p.channels();
    let theta = &x[..n];
    let eta = x[n];
    let y = map.eval_raw(theta);
    let nu = p.schedule.nu(t)?;
    let log_phi = p.schedule.log_phi(t)?;
    for i in 0..n {
        let w = p.omega * p.omega_hat[i];
        let rho = phase_term(p.k[i], log_phi, y - eta, t)?;
        dx[i] = nu * (p.alpha[i] * w).sqrt() * (w * t + rho).cos();
    }
    dx[n] = p.omega_h * (y - eta);
    Ok(())
}

pub fn es_rhs<T: Scalar>(p: &EsParams<T>, map: &CostMap<T>, s: &EsState<T>, t: T) -> Result<(Vec<T>, T)> {
    p.check_against(map)?;
    if s.theta.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: s.theta.len() });
    }
    let mut x = s.theta.clone();
    x.push(s.eta);
    let mut dx = vec![T::zero(); x.len()];
    es_rhs_into(p, map, t, &x, &mut dx)?;
    let eta_dot = dx.pop().expect("packed state has filter slot");
    Ok((dx, eta_dot))
}

/// Quantities shared by the transformed, averaged and bracket fields at one
/// `(state, t)`.
pub(crate) struct ScaledTerms<T> {
    pub growth: T,
    pub log_phi: T,
    /// `ξ^{2κ}`
    pub scale: T,
    /// `J_f(θ_f, ξ) = J(θ* + θ_f/ξ) - J(θ*)`
    pub jf: T,
}

pub(crate) fn scaled_terms<T: Scalar>(
    schedule: &Schedule<T>,
    map: &CostMap<T>,
    theta_f: &[T],
    t: T,
    offset_buf: &mut Vec<T>,
) -> Result<ScaledTerms<T>> {
    let log_xi = schedule.log_xi(t)?;
    let xi = log_xi.exp();
    let two_kappa = T::lit(2.0 * map.kappa() as f64);
    offset_buf.clear();
    offset_buf.extend(theta_f.iter().map(|&v| v / xi));
    let jf = map.centered_eval(offset_buf)?;
    Ok(ScaledTerms {
        growth: schedule.growth_rate(t)?,
        log_phi: schedule.log_phi(t)?,
        scale: (two_kappa * log_xi).exp(),
        jf,
    })
}

/// Vector field in scaled error coordinates on `[θ_f₁ … θ_fₙ, η_f]`.
pub fn transformed_rhs_into<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    t: T,
    x: &[T],
    dx: &mut [T],
) -> Result<()> {
    let n = p.channels();
    let mut buf = Vec::with_capacity(n);
    let s = scaled_terms(&p.schedule, map, &x[..n], t, &mut buf)?;
    let eta_f = x[n];
    let err = s.jf - eta_f / s.scale;
    for i in 0..n {
        let w = p.omega * p.omega_hat[i];
        let rho = phase_term(p.k[i], s.log_phi, err, t)?;
        dx[i] = s.growth * x[i] + (p.alpha[i] * w).sqrt() * (w * t + rho).cos();
    }
    let two_kappa = T::lit(2.0 * map.kappa() as f64);
    dx[n] = (two_kappa * s.growth - p.omega_h) * eta_f + p.omega_h * s.scale * s.jf;
    Ok(())
}

pub fn transformed_rhs<T: Scalar>(
    p: &EsParams<T>,
    map: &CostMap<T>,
    s: &TransformedState<T>,
    t: T,
) -> Result<(Vec<T>, T)> {
    p.check_against(map)?;
    if map.optimum().is_none() {
        return Err(Error::Capability(format!(
            "transformed coordinates need the optimum of map '{}'",
            map.name()
        )));
    }
    if s.theta_f.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: s.theta_f.len() });
    }
    let mut x = s.theta_f.clone();
    x.push(s.eta_f);
    let mut dx = vec![T::zero(); x.len()];
    transformed_rhs_into(p, map, t, &x, &mut dx)?;
    let eta_dot = dx.pop().expect("packed state has filter slot");
    Ok((dx, eta_dot))
}

/// Maps an original-coordinate state to scaled error coordinates at time `t`.
pub fn to_transformed<T: Scalar>(
    schedule: &Schedule<T>,
    map: &CostMap<T>,
    s: &EsState<T>,
    t: T,
) -> Result<TransformedState<T>> {
    let opt = map
        .optimum()
        .ok_or_else(|| Error::Capability(format!("map '{}' has no declared optimum", map.name())))?;
    let jstar = map.optimal_value().expect("optimum carries its value");
    let log_xi = schedule.log_xi(t)?;
    let xi = log_xi.exp();
    let scale = (T::lit(2.0 * map.kappa() as f64) * log_xi).exp();
    Ok(TransformedState {
        theta_f: s.theta.iter().zip(opt).map(|(&v, &o)| xi * (v - o)).collect(),
        eta_f: scale * (s.eta - jstar),
    })
}

/// Inverse of [`to_transformed`].
pub fn from_transformed<T: Scalar>(
    schedule: &Schedule<T>,
    map: &CostMap<T>,
    s: &TransformedState<T>,
    t: T,
) -> Result<EsState<T>> {
    let opt = map
        .optimum()
        .ok_or_else(|| Error::Capability(format!("map '{}' has no declared optimum", map.name())))?;
    let jstar = map.optimal_value().expect("optimum carries its value");
    let log_xi = schedule.log_xi(t)?;
    let xi = log_xi.exp();
    let scale = (T::lit(2.0 * map.kappa() as f64) * log_xi).exp();
    Ok(EsState {
        theta: s.theta_f.iter().zip(opt).map(|(&v, &o)| o + v / xi).collect(),
        eta: jstar + s.eta_f / scale,
    })
}

/// The closed loop as an integrable system.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a, T> {
    params: &'a EsParams<T>,
    map: &'a CostMap<T>,
}

impl<'a, T: Scalar> ClosedLoop<'a, T> {
    pub fn new(params: &'a EsParams<T>, map: &'a CostMap<T>) -> Result<Self> {
        params.check_against(map)?;
        Ok(Self { params, map })
    }
}

impl<T: Scalar> OdeSystem<T> for ClosedLoop<'_, T> {
    fn dim(&self) -> usize {
        self.params.channels() + 1
    }

    fn rhs(&self, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
        es_rhs_into(self.params, self.map, t, x, dx)
    }

    fn max_frequency(&self) -> Option<T> {
        Some(self.params.max_frequency())
    }
}

/// The closed loop in scaled error coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TransformedLoop<'a, T> {
    params: &'a EsParams<T>,
    map: &'a CostMap<T>,
}

impl<'a, T: Scalar> TransformedLoop<'a, T> {
    pub fn new(params: &'a EsParams<T>, map: &'a CostMap<T>) -> Result<Self> {
        params.check_against(map)?;
        if map.optimum().is_none() {
            return Err(Error::Capability(format!(
                "transformed coordinates need the optimum of map '{}'",
                map.name()
            )));
        }
        Ok(Self { params, map })
    }
}

impl<T: Scalar> OdeSystem<T> for TransformedLoop<'_, T> {
    fn dim(&self) -> usize {
        self.params.channels() + 1
    }

    fn rhs(&self, t: T, x: &[T], dx: &mut [T]) -> Result<()> {
        transformed_rhs_into(self.params, self.map, t, x, dx)
    }

    fn max_frequency(&self) -> Option<T> {
        Some(self.params.max_frequency())
    }
}
