//! Static cost maps `J(θ)` with optional closed-form derivatives.
//!
//! A map may declare its minimiser `θ*` and `J(θ*)`. Those are diagnostics:
//! the closed loop in [`crate::controllers`] never reads them, but the
//! transformed and averaged comparison systems do. Maps with a declared
//! optimum may also carry a *centered* evaluation `d ↦ J(θ* + d) - J(θ*)`
//! that avoids cancellation when `|d|` is tiny.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::scalar::{norm, symmetric_spectral_norm, Scalar};

pub type EvalFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type GradFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type HessFn<T> = Arc<dyn Fn(&[T]) -> Vec<Vec<T>> + Send + Sync>;

/// Power-growth constants of the cost map around its minimiser:
///
/// ```text
/// a1 |θ-θ*|^(2κ)   ≤ J(θ) - J(θ*) ≤ a2 |θ-θ*|^(2κ)
/// b1 |θ-θ*|^(2κ-1) ≤ |∇J(θ)|      ≤ b2 |θ-θ*|^(2κ-1)
/// c1 |θ-θ*|^(2κ-2) ≤ |∇²J(θ)|     ≤ c2 |θ-θ*|^(2κ-2)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBounds<T> {
    pub a1: T,
    pub a2: T,
    pub b1: T,
    pub b2: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Scalar> PowerBounds<T> {
    pub fn new(a1: T, a2: T, b1: T, b2: T, c1: T, c2: T) -> Result<Self> {
        let pairs = [("a", a1, a2), ("b", b1, b2), ("c", c1, c2)];
        for (name, lo, hi) in pairs {
            if !(lo > T::zero() && hi.is_finite()) {
                return Err(invalid(format!("power bound {name}1 must be positive, got {lo}")));
            }
            if lo > hi {
                return Err(invalid(format!("power bound {name}1 = {lo} exceeds {name}2 = {hi}")));
            }
        }
        Ok(Self { a1, a2, b1, b2, c1, c2 })
    }
}

#[derive(Clone)]
struct Optimum<T> {
    point: Vec<T>,
    value: T,
}

/// Scalar objective `J: ℝⁿ → ℝ`.
#[derive(Clone)]
pub struct CostMap<T> {
    name: String,
    dim: usize,
    kappa: u32,
    eval: EvalFn<T>,
    grad: Option<GradFn<T>>,
    hess: Option<HessFn<T>>,
    optimum: Option<Optimum<T>>,
    centered: Option<EvalFn<T>>,
    centered_grad: Option<GradFn<T>>,
    bounds: Option<PowerBounds<T>>,
}

impl<T> fmt::Debug for CostMap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostMap")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("kappa", &self.kappa)
            .field("closed_form_gradient", &self.grad.is_some())
            .field("closed_form_hessian", &self.hess.is_some())
            .field("optimum_known", &self.optimum.is_some())
            .finish()
    }
}

impl<T: Scalar> CostMap<T> {
    pub fn new<F>(name: impl Into<String>, dim: usize, kappa: u32, eval: F) -> Result<Self>
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(invalid("cost map dimension must be positive"));
        }
        if kappa == 0 {
            return Err(invalid("convexity order kappa must be a positive integer"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            kappa,
            eval: Arc::new(eval),
            grad: None,
            hess: None,
            optimum: None,
            centered: None,
            centered_grad: None,
            bounds: None,
        })
    }

    pub fn with_gradient<F>(mut self, grad: F) -> Self
    where
        F: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_hessian<F>(mut self, hess: F) -> Self
    where
        F: Fn(&[T]) -> Vec<Vec<T>> + Send + Sync + 'static,
    {
        self.hess = Some(Arc::new(hess));
        self
    }

    /// Installs the symbolic `d ↦ J(θ*+d) - J(θ*)` and, optionally, its
    /// gradient `d ↦ ∇J(θ*+d)`.
    pub fn with_centered<F>(mut self, centered: F, centered_grad: Option<GradFn<T>>) -> Self
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        self.centered = Some(Arc::new(centered));
        self.centered_grad = centered_grad;
        self
    }

    pub fn with_bounds(mut self, bounds: PowerBounds<T>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Declares the minimiser. Rejects points where the gradient does not
    /// vanish.
    pub fn with_optimum(mut self, point: Vec<T>, value: T) -> Result<Self> {
        self.check_dim(&point)?;
        let g = self.gradient(&point)?;
        let gn = norm(&g);
        if !(gn < T::lit(T::STATIONARY_TOL)) {
            return Err(Error::AssumptionViolation(format!(
                "gradient norm {gn} at declared optimum of '{}' is not zero",
                self.name
            )));
        }
        self.optimum = Some(Optimum { point, value });
        Ok(self)
    }

    /// `J(θ) = 1 + (θ - 2)⁴`, minimiser 2, `κ = 2`.
    pub fn quartic_paper() -> Self {
        let two = T::lit(2.0);
        let map = Self::new("quartic_paper", 1, 2, move |th: &[T]| T::one() + (th[0] - two).powi(4))
            .expect("valid quartic map")
            .with_gradient(move |th: &[T]| vec![T::lit(4.0) * (th[0] - two).powi(3)])
            .with_hessian(move |th: &[T]| vec![vec![T::lit(12.0) * (th[0] - two).powi(2)]])
            .with_centered(
                |d: &[T]| d[0].powi(4),
                Some(Arc::new(|d: &[T]| vec![T::lit(4.0) * d[0].powi(3)])),
            )
            .with_bounds(PowerBounds {
                a1: T::one(),
                a2: T::one(),
                b1: T::lit(4.0),
                b2: T::lit(4.0),
                c1: T::lit(12.0),
                c2: T::lit(12.0),
            });
        map.with_optimum(vec![two], T::one()).expect("quartic optimum is stationary")
    }

    /// `J(θ) = Σ qᵢ (θᵢ - cᵢ)²`, minimiser `c`, `κ = 1`.
    pub fn quadratic(q: Vec<T>, center: Vec<T>) -> Result<Self> {
        if q.is_empty() || q.len() != center.len() {
            return Err(invalid(format!(
                "quadratic map needs equally long non-empty weights and center (got {} and {})",
                q.len(),
                center.len()
            )));
        }
        if q.iter().any(|&w| !(w > T::zero() && w.is_finite())) {
            return Err(invalid("quadratic weights must be positive and finite"));
        }
        let n = q.len();
        let (qmin, qmax) = q
            .iter()
            .fold((T::infinity(), T::zero()), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        let two = T::lit(2.0);

        let (qe, ce) = (q.clone(), center.clone());
        let (qg, cg) = (q.clone(), center.clone());
        let qh = q.clone();
        let (qc, qcg) = (q.clone(), q.clone());
        let map = Self::new("quadratic", n, 1, move |th: &[T]| {
            th.iter()
                .zip(&qe)
                .zip(&ce)
                .fold(T::zero(), |acc, ((&x, &w), &c)| acc + w * (x - c) * (x - c))
        })?
        .with_gradient(move |th: &[T]| {
            th.iter().zip(&qg).zip(&cg).map(|((&x, &w), &c)| two * w * (x - c)).collect()
        })
        .with_hessian(move |_th: &[T]| {
            (0..qh.len())
                .map(|i| (0..qh.len()).map(|j| if i == j { two * qh[i] } else { T::zero() }).collect())
                .collect()
        })
        .with_centered(
            move |d: &[T]| d.iter().zip(&qc).fold(T::zero(), |acc, (&x, &w)| acc + w * x * x),
            Some(Arc::new(move |d: &[T]| d.iter().zip(&qcg).map(|(&x, &w)| two * w * x).collect())),
        )
        .with_bounds(PowerBounds {
            a1: qmin,
            a2: qmax,
            b1: two * qmin,
            b2: two * qmax,
            c1: two * qmax,
            c2: two * qmax,
        });
        map.with_optimum(center, T::zero())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn bounds(&self) -> Option<&PowerBounds<T>> {
        self.bounds.as_ref()
    }

    pub fn optimum(&self) -> Option<&[T]> {
        self.optimum.as_ref().map(|o| o.point.as_slice())
    }

    pub fn optimal_value(&self) -> Option<T> {
        self.optimum.as_ref().map(|o| o.value)
    }

    pub fn has_closed_form_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn has_closed_form_hessian(&self) -> bool {
        self.hess.is_some()
    }

    fn check_dim(&self, theta: &[T]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: theta.len() });
        }
        Ok(())
    }

    fn require_optimum(&self) -> Result<&Optimum<T>> {
        self.optimum
            .as_ref()
            .ok_or_else(|| Error::Capability(format!("map '{}' has no declared optimum", self.name)))
    }

    pub fn eval(&self, theta: &[T]) -> Result<T> {
        self.check_dim(theta)?;
        Ok((self.eval)(theta))
    }

    /// Unchecked evaluation for hot loops whose dimensions were validated
    /// upstream.
    #[inline]
    pub(crate) fn eval_raw(&self, theta: &[T]) -> T {
        (self.eval)(theta)
    }

    /// Closed-form gradient when available, central differences otherwise.
    pub fn gradient(&self, theta: &[T]) -> Result<Vec<T>> {
        self.check_dim(theta)?;
        match &self.grad {
            Some(g) => Ok(g(theta)),
            None => self.grad_fd(theta, T::lit(T::FD_STEP)),
        }
    }

    /// Closed-form Hessian when available, central differences otherwise.
    pub fn hessian(&self, theta: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_dim(theta)?;
        match &self.hess {
            Some(h) => Ok(h(theta)),
            None => self.hess_fd(theta, T::lit(T::FD_STEP2)),
        }
    }

    /// Central-difference gradient; the step in coordinate `i` is
    /// `h · max(1, |θᵢ|)`.
    pub fn grad_fd(&self, theta: &[T], h: T) -> Result<Vec<T>> {
        self.check_dim(theta)?;
        if !(h > T::zero()) {
            return Err(invalid(format!("finite-difference step must be positive, got {h}")));
        }
        let mut x = theta.to_vec();
        let two = T::lit(2.0);
        let grad = (0..self.dim)
            .map(|i| {
                let hi = h * T::one().max(theta[i].abs());
                x[i] = theta[i] + hi;
                let fp = (self.eval)(&x);
                x[i] = theta[i] - hi;
                let fm = (self.eval)(&x);
                x[i] = theta[i];
                (fp - fm) / (two * hi)
            })
            .collect();
        Ok(grad)
    }

    /// Symmetric central-difference Hessian.
    pub fn hess_fd(&self, theta: &[T], h: T) -> Result<Vec<Vec<T>>> {
        self.check_dim(theta)?;
        if !(h > T::zero()) {
            return Err(invalid(format!("finite-difference step must be positive, got {h}")));
        }
        let n = self.dim;
        let steps: Vec<T> = theta.iter().map(|&v| h * T::one().max(v.abs())).collect();
        let f0 = (self.eval)(theta);
        let mut x = theta.to_vec();
        let mut out = vec![vec![T::zero(); n]; n];
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        for i in 0..n {
            let hi = steps[i];
            x[i] = theta[i] + hi;
            let fp = (self.eval)(&x);
            x[i] = theta[i] - hi;
            let fm = (self.eval)(&x);
            x[i] = theta[i];
            out[i][i] = (fp - two * f0 + fm) / (hi * hi);
            for j in (i + 1)..n {
                let hj = steps[j];
                let mut corner = |si: T, sj: T| {
                    x[i] = theta[i] + si * hi;
                    x[j] = theta[j] + sj * hj;
                    let v = (self.eval)(&x);
                    x[i] = theta[i];
                    x[j] = theta[j];
                    v
                };
                let one = T::one();
                let pp = corner(one, one);
                let pm = corner(one, -one);
                let mp = corner(-one, one);
                let mm = corner(-one, -one);
                let hij = (pp - pm - mp + mm) / (four * hi * hj);
                out[i][j] = hij;
                out[j][i] = hij;
            }
        }
        Ok(out)
    }

    /// `J(θ* + d) - J(θ*)`, symbolic when the map provides it.
    pub fn centered_eval(&self, offset: &[T]) -> Result<T> {
        self.check_dim(offset)?;
        let opt = self.require_optimum()?;
        Ok(self.centered_raw(opt, offset))
    }

    #[inline]
    fn centered_raw(&self, opt: &Optimum<T>, offset: &[T]) -> T {
        match &self.centered {
            Some(c) => c(offset),
            None => {
                let x: Vec<T> = opt.point.iter().zip(offset).map(|(&p, &d)| p + d).collect();
                (self.eval)(&x) - opt.value
            }
        }
    }

    /// `∇J(θ* + d)`.
    pub fn centered_gradient(&self, offset: &[T]) -> Result<Vec<T>> {
        self.check_dim(offset)?;
        let opt = self.require_optimum()?;
        match &self.centered_grad {
            Some(g) => Ok(g(offset)),
            None => {
                let x: Vec<T> = opt.point.iter().zip(offset).map(|(&p, &d)| p + d).collect();
                self.gradient(&x)
            }
        }
    }

    /// Empirical power-bound constants over seeded uniform samples in the
    /// ball of the given radius around `θ*` (the centre itself excluded).
    ///
    /// The returned infima/suprema are a witness of the growth bounds on the
    /// sampled set only.
    pub fn verify_power_bounds(&self, radius: T, samples: usize, seed: u64) -> Result<PowerBounds<T>> {
        let opt = self.require_optimum()?;
        if !(radius > T::zero() && radius.is_finite()) {
            return Err(invalid(format!("sampling radius must be positive, got {radius}")));
        }
        if samples < 2 {
            return Err(invalid("power-bound verification needs at least 2 samples"));
        }
        let n = self.dim;
        let two_k = 2 * self.kappa as i32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        let mut taken = 0;
        while taken < samples {
            let offset = sample_in_ball(&mut rng, n, radius.as_f64());
            let offset: Vec<T> = offset.into_iter().map(T::lit).collect();
            let dist = norm(&offset);
            if dist == T::zero() {
                continue;
            }
            let theta: Vec<T> = opt.point.iter().zip(&offset).map(|(&p, &d)| p + d).collect();
            let dj = self.centered_raw(opt, &offset);
            let g = norm(&self.centered_gradient(&offset)?);
            let hess = symmetric_spectral_norm(&self.hessian(&theta)?);
            let ratios = [
                dj / dist.powi(two_k),
                g / dist.powi(two_k - 1),
                hess / dist.powi(two_k - 2),
            ];
            for (k, r) in ratios.into_iter().enumerate() {
                if !r.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite growth ratio at sample {taken} (|θ-θ*| = {dist})"
                    )));
                }
                lo[k] = lo[k].min(r);
                hi[k] = hi[k].max(r);
            }
            taken += 1;
        }
        for (k, label) in ["cost", "gradient", "hessian"].iter().enumerate() {
            if !(lo[k] > T::zero()) {
                return Err(Error::AssumptionViolation(format!(
                    "{label} growth infimum {} ≤ 0 for map '{}' with kappa = {}",
                    lo[k], self.name, self.kappa
                )));
            }
        }
        PowerBounds::new(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2])
    }
}

/// Uniform sample in the open n-ball of the given radius.
pub(crate) fn sample_in_ball<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 || !len.is_finite() {
            continue;
        }
        let u: f64 = rng.gen();
        let r = radius * u.powf(1.0 / n as f64);
        if r >= radius {
            continue;
        }
        return dir.into_iter().map(|x| x / len * r).collect();
    }
}
