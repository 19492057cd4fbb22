//! Floating point abstraction shared by every module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the simulation is generic over: `f32` or `f64`.
///
/// The constants carry the precision-dependent thresholds used by the
/// numerics (finite-difference steps, underflow guards, tolerance on the
/// stationarity check at a declared optimum).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Below this magnitude the phase term `k φ (y - η)` is formed in the
    /// log domain.
    const TINY: f64;
    /// Largest gradient norm accepted at a declared optimum.
    const STATIONARY_TOL: f64;
    /// Default relative step for first-derivative central differences.
    const FD_STEP: f64;
    /// Default relative step for second-derivative central differences.
    const FD_STEP2: f64;

    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Lossy conversion used for error messages and reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const TINY: f64 = 1e-280;
    const STATIONARY_TOL: f64 = 1e-8;
    const FD_STEP: f64 = 1e-5;
    const FD_STEP2: f64 = 1e-4;
}

impl Scalar for f32 {
    const TINY: f64 = 1e-35;
    const STATIONARY_TOL: f64 = 1e-3;
    const FD_STEP: f64 = 1e-2;
    const FD_STEP2: f64 = 3e-2;
}

/// Euclidean norm.
pub fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Euclidean distance between two equally sized vectors.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// Spectral norm of a symmetric matrix via cyclic Jacobi rotations.
pub fn symmetric_spectral_norm<T: Scalar>(m: &[Vec<T>]) -> T {
    let n = m.len();
    if n == 0 {
        return T::zero();
    }
    let mut a: Vec<Vec<T>> = m.to_vec();
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + a[i][j] * a[i][j]);
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).fold(T::zero(), |acc, i| acc.max(a[i][i].abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal_and_rotated() {
        let d = vec![vec![2.0, 0.0], vec![0.0, -5.0]];
        assert!((symmetric_spectral_norm(&d) - 5.0f64).abs() < 1e-14);
        // eigenvalues 3 and 1
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        assert!((symmetric_spectral_norm(&m) - 3.0f64).abs() < 1e-12);
        let m3 = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ];
        // eigenvalues 3, 3 ± sqrt(3)
        assert!((symmetric_spectral_norm(&m3) - (3.0 + 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0f64, 4.0]), 5.0);
        assert_eq!(distance(&[1.0f32, 1.0], &[4.0, 5.0]), 5.0);
    }
}
