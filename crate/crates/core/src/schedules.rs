//! Time-varying amplitude `ν(t)` and gain `φ(t)` schedules together with the
//! growth function `ξ(t)` they are built from.
//!
//! | kind        | ξ(t)                     | ν(t)   | φ(t)  |
//! |-------------|--------------------------|--------|-------|
//! | nominal     | 1                        | 1      | 1     |
//! | asymptotic  | (1 + β(t - t0))^(1/v)    | 1/ξ    | ξ^r   |
//! | exponential | e^(λ(t - t0))            | 1/ξ    | ξ²    |
//!
//! Everything is evaluated through `log ξ` so that large horizons lose
//! neither precision nor range before the final exponentiation.

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind<T> {
    Nominal,
    Asymptotic { beta: T, v: T, r: T },
    Exponential { lambda: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule<T> {
    kind: ScheduleKind<T>,
    t0: T,
}

impl<T: Scalar> Schedule<T> {
    pub fn nominal(t0: T) -> Result<Self> {
        check_t0(t0)?;
        Ok(Self { kind: ScheduleKind::Nominal, t0 })
    }

    pub fn asymptotic(beta: T, v: T, r: T, t0: T) -> Result<Self> {
        check_t0(t0)?;
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(invalid(format!("schedule.beta must be > 0, got {beta}")));
        }
        if !(v > T::zero() && v.is_finite()) {
            return Err(invalid(format!("schedule.v must be > 0, got {v}")));
        }
        if !(r >= T::zero() && r.is_finite()) {
            return Err(invalid(format!("schedule.r must be >= 0, got {r}")));
        }
        Ok(Self { kind: ScheduleKind::Asymptotic { beta, v, r }, t0 })
    }

    pub fn exponential(lambda: T, t0: T) -> Result<Self> {
        check_t0(t0)?;
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(invalid(format!("schedule.lambda must be > 0, got {lambda}")));
        }
        Ok(Self { kind: ScheduleKind::Exponential { lambda }, t0 })
    }

    pub fn kind(&self) -> ScheduleKind<T> {
        self.kind
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn is_nominal(&self) -> bool {
        matches!(self.kind, ScheduleKind::Nominal)
    }

    fn elapsed(&self, t: T) -> Result<T> {
        if !(t >= self.t0) {
            return Err(invalid(format!("time {t} precedes schedule start t0 = {}", self.t0)));
        }
        Ok(t - self.t0)
    }

    /// `log ξ(t)`.
    pub fn log_xi(&self, t: T) -> Result<T> {
        let dt = self.elapsed(t)?;
        Ok(match self.kind {
            ScheduleKind::Nominal => T::zero(),
            ScheduleKind::Asymptotic { beta, v, .. } => (beta * dt).ln_1p() / v,
            ScheduleKind::Exponential { lambda } => lambda * dt,
        })
    }

    /// Exponent `g` with `φ = ξ^g`.
    pub fn gain_exponent(&self) -> T {
        match self.kind {
            ScheduleKind::Nominal => T::zero(),
            ScheduleKind::Asymptotic { r, .. } => r,
            ScheduleKind::Exponential { .. } => T::lit(2.0),
        }
    }

    /// Growth function: `ξ` for asymptotic schedules, `ζ` for exponential
    /// ones, 1 for nominal.
    pub fn xi(&self, t: T) -> Result<T> {
        Ok(self.log_xi(t)?.exp())
    }

    /// Amplitude multiplier `ν = 1/ξ`.
    pub fn nu(&self, t: T) -> Result<T> {
        Ok((-self.log_xi(t)?).exp())
    }

    pub fn log_phi(&self, t: T) -> Result<T> {
        Ok(self.gain_exponent() * self.log_xi(t)?)
    }

    /// Gain multiplier `φ = ξ^g`; errors once it leaves the finite range.
    pub fn phi(&self, t: T) -> Result<T> {
        let v = self.log_phi(t)?.exp();
        if !v.is_finite() {
            return Err(Error::Overflow { t: t.as_f64() });
        }
        Ok(v)
    }

    /// Logarithmic growth rate `ξ'/ξ`.
    pub fn growth_rate(&self, t: T) -> Result<T> {
        let dt = self.elapsed(t)?;
        Ok(match self.kind {
            ScheduleKind::Nominal => T::zero(),
            ScheduleKind::Asymptotic { beta, v, .. } => beta / (v * (T::one() + beta * dt)),
            ScheduleKind::Exponential { lambda } => lambda,
        })
    }
}

fn check_t0<T: Scalar>(t0: T) -> Result<()> {
    if !(t0 >= T::zero() && t0.is_finite()) {
        return Err(invalid(format!("schedule.t0 must be finite and >= 0, got {t0}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn reference_asym() -> Schedule<f64> {
        Schedule::asymptotic(0.1, 1.0 / 3.0, 4.0, 0.0).unwrap()
    }

    #[test]
    fn xi_values() {
        assert!(rel(reference_asym().xi(10.0).unwrap(), 8.0) < 1e-14);
        let e = Schedule::<f64>::exponential(0.1, 0.0).unwrap();
        assert!(rel(e.xi(10.0).unwrap(), 1f64.exp()) < 1e-14);
        assert_eq!(Schedule::nominal(0.0).unwrap().xi(123.0).unwrap(), 1.0);
    }

    #[test]
    fn nu_values() {
        assert!(rel(reference_asym().nu(10.0).unwrap(), 0.125) < 1e-14);
        assert!(rel(reference_asym().nu(90.0).unwrap(), 0.001) < 1e-13);
        let e = Schedule::<f64>::exponential(0.1, 0.0).unwrap();
        assert!((e.nu(10.0).unwrap() - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn phi_values() {
        assert!(rel(reference_asym().phi(10.0).unwrap(), 4096.0) < 1e-13);
        let e = Schedule::<f64>::exponential(0.1, 0.0).unwrap();
        assert!((e.phi(10.0).unwrap() - 7.3890561).abs() < 1e-7);
        assert_eq!(Schedule::nominal(0.0).unwrap().phi(5.0).unwrap(), 1.0);
    }

    #[test]
    fn start_time_offsets() {
        let s = Schedule::asymptotic(0.1, 1.0 / 3.0, 4.0, 5.0).unwrap();
        assert!(rel(s.xi(15.0).unwrap(), 8.0) < 1e-14);
        assert!(matches!(s.xi(4.0), Err(Error::InvalidArgument(_))));
        assert!(s.phi(1.0).is_err());
    }

    #[test]
    fn phi_overflow_names_time() {
        let e = Schedule::<f64>::exponential(1.0, 0.0).unwrap();
        assert_eq!(e.phi(400.0), Err(Error::Overflow { t: 400.0 }));
        // log domain keeps ξ finite where a naive ξ^r would not matter
        assert!(e.log_phi(400.0).unwrap().is_finite());
    }

    #[test]
    fn constructor_validation() {
        assert!(Schedule::asymptotic(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(Schedule::asymptotic(0.1, 0.0, 1.0, 0.0).is_err());
        assert!(Schedule::asymptotic(0.1, 1.0, -1.0, 0.0).is_err());
        assert!(Schedule::asymptotic(0.1, 1.0, 0.0, 0.0).is_ok());
        assert!(Schedule::exponential(-0.1, 0.0).is_err());
        assert!(Schedule::<f64>::nominal(-1.0).is_err());
    }

    #[test]
    fn growth_rate_matches_log_derivative() {
        let s = reference_asym();
        for &t in &[0.0, 1.0, 17.0, 80.0] {
            let h = 1e-5;
            let fd = (s.log_xi(t + h).unwrap() - s.log_xi((t - h).max(0.0)).unwrap()) / (t + h - (t - h).max(0.0));
            assert!((fd - s.growth_rate(t).unwrap()).abs() < 1e-6);
        }
    }

    fn schedules() -> impl Strategy<Value = Schedule<f64>> {
        prop_oneof![
            (0.01f64..2.0, 0.1f64..3.0, 0.0f64..6.0, 0.0f64..5.0)
                .prop_map(|(b, v, r, t0)| Schedule::asymptotic(b, v, r, t0).unwrap()),
            (0.01f64..0.5, 0.0f64..5.0).prop_map(|(l, t0)| Schedule::exponential(l, t0).unwrap()),
            (0.0f64..5.0).prop_map(|t0| Schedule::nominal(t0).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn nu_is_reciprocal_of_xi(s in schedules(), dt in 0.0f64..100.0) {
            let t = s.t0() + dt;
            let prod = s.nu(t).unwrap() * s.xi(t).unwrap();
            prop_assert!((prod - 1.0).abs() < 1e-12);
        }

        #[test]
        fn phi_is_power_of_xi(s in schedules(), dt in 0.0f64..60.0) {
            let t = s.t0() + dt;
            let want = s.xi(t).unwrap().powf(s.gain_exponent());
            prop_assert!(rel(s.phi(t).unwrap(), want) < 1e-12);
        }

        #[test]
        fn monotone_on_grid(s in schedules(), dts in proptest::collection::vec(0.0f64..100.0, 2..40)) {
            let mut ts: Vec<f64> = dts.iter().map(|d| s.t0() + d).collect();
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in ts.windows(2) {
                prop_assert!(s.nu(w[1]).unwrap() <= s.nu(w[0]).unwrap());
                prop_assert!(s.phi(w[1]).unwrap() >= s.phi(w[0]).unwrap());
            }
        }
    }
}
