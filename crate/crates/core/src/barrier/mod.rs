//! Safety functions `h` whose superlevel set `{h ≥ 0}` is the safe set, with
//! the curvature bound `λ_max ≥ sup ‖∇²h‖₂` and global upper bound `M`
//! consumed by the Jensen correction and the exit-probability bounds.

mod margin;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_psd, check_square, max_sym_eigenvalue};
use crate::rng::seeded;

pub use margin::{compute_gamma, compute_gamma_montecarlo, compute_h_gamma, GammaMode, LevelSetSearch, ShiftedBarrier};

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone, PartialEq)]
pub enum Barrier {
    /// `h(x) = aᵀx + b`.
    HalfSpace { a: DVector<f64>, b: f64 },
    /// `h(x) = c0 − (x − center)ᵀ W (x − center)`.
    ConcaveQuadratic {
        c0: f64,
        w: DMatrix<f64>,
        center: DVector<f64>,
    },
    /// User-supplied callbacks.
    Generic(GenericBarrier),
}

/// A barrier defined by closures. `anchor` must be a point with `h > 0`; it
/// seeds the zero-level-set search used for `h_γ`.
#[derive(Clone)]
pub struct GenericBarrier {
    pub dim: usize,
    pub value: ScalarFn,
    pub gradient: VectorFn,
    pub hessian: MatrixFn,
    pub lambda_max: Option<f64>,
    pub upper_bound: Option<f64>,
    pub anchor: DVector<f64>,
}

impl GenericBarrier {
    pub fn new(
        anchor: DVector<f64>,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim: anchor.len(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            lambda_max: None,
            upper_bound: None,
            anchor,
        }
    }

    pub fn with_hessian_bound(mut self, lambda_max: f64) -> Self {
        self.lambda_max = Some(lambda_max);
        self
    }

    pub fn with_upper_bound(mut self, m: f64) -> Self {
        self.upper_bound = Some(m);
        self
    }

    /// Checks the supplied `M` against the largest sampled value of `h`
    /// (and of `‖∇²h‖₂` against `λ_max`) over the box `[lo, hi]`.
    pub fn check_against_probe_box(
        &self,
        lo: &DVector<f64>,
        hi: &DVector<f64>,
        samples: usize,
        seed: u64,
    ) -> Result<()> {
        check_len("probe box lower corner", lo, self.dim)?;
        check_len("probe box upper corner", hi, self.dim)?;
        let m = self
            .upper_bound
            .ok_or_else(|| Error::Config("generic barrier needs an upper bound M".into()))?;
        let lambda = self
            .lambda_max
            .ok_or_else(|| Error::Config("generic barrier needs a Hessian bound".into()))?;
        let mut rng = seeded(seed);
        for _ in 0..samples {
            let x = DVector::from_fn(self.dim, |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
            let h = (self.value)(&x);
            if h > m {
                return Err(Error::Config(format!(
                    "generic barrier exceeds its upper bound: h = {h} > M = {m}"
                )));
            }
            let curvature = (self.hessian)(&x).singular_values().max();
            if curvature > lambda * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "generic barrier Hessian norm {curvature} exceeds λ_max = {lambda}"
                )));
            }
        }
        Ok(())
    }
}

impl PartialEq for GenericBarrier {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.value, &other.value)
            && self.lambda_max == other.lambda_max
            && self.upper_bound == other.upper_bound
            && self.anchor == other.anchor
    }
}

impl fmt::Debug for GenericBarrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericBarrier")
            .field("dim", &self.dim)
            .field("lambda_max", &self.lambda_max)
            .field("upper_bound", &self.upper_bound)
            .field("anchor", &self.anchor)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Barrier::HalfSpace { a, b } => f.debug_struct("HalfSpace").field("a", a).field("b", b).finish(),
            Barrier::ConcaveQuadratic { c0, w, center } => f
                .debug_struct("ConcaveQuadratic")
                .field("c0", c0)
                .field("w", w)
                .field("center", center)
                .finish(),
            Barrier::Generic(g) => g.fmt(f),
        }
    }
}

impl Barrier {
    pub fn half_space(a: DVector<f64>, b: f64) -> Result<Self> {
        let bar = Barrier::HalfSpace { a, b };
        bar.validate()?;
        Ok(bar)
    }

    pub fn concave_quadratic(c0: f64, w: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        let bar = Barrier::ConcaveQuadratic { c0, w, center };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Barrier::HalfSpace { a, b } => {
                if a.is_empty() || a.iter().all(|&v| v == 0.0) {
                    return Err(Error::Config("half-space barrier needs a nonzero normal".into()));
                }
                if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("half-space barrier has non-finite coefficients".into()));
                }
            }
            Barrier::ConcaveQuadratic { c0, w, center } => {
                check_square("barrier W", w, center.len())?;
                check_psd("barrier W", w)?;
                if !(*c0 > 0.0) {
                    return Err(Error::Config(format!("quadratic barrier needs c0 > 0, got {c0}")));
                }
            }
            Barrier::Generic(g) => {
                check_len("generic barrier anchor", &g.anchor, g.dim)?;
                if let Some(l) = g.lambda_max {
                    if !(l >= 0.0) {
                        return Err(Error::Config(format!("generic barrier λ_max must be ≥ 0, got {l}")));
                    }
                }
                if (g.value)(&g.anchor) <= 0.0 {
                    return Err(Error::Config(
                        "generic barrier anchor must lie strictly inside the safe set".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Barrier::HalfSpace { a, .. } => a.len(),
            Barrier::ConcaveQuadratic { center, .. } => center.len(),
            Barrier::Generic(g) => g.dim,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            Barrier::HalfSpace { a, b } => a.dot(x) + b,
            Barrier::ConcaveQuadratic { c0, w, center } => {
                let d = x - center;
                c0 - d.dot(&(w * &d))
            }
            Barrier::Generic(g) => (g.value)(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Barrier::HalfSpace { a, .. } => a.clone(),
            Barrier::ConcaveQuadratic { w, center, .. } => -(w + w.transpose()) * (x - center),
            Barrier::Generic(g) => (g.gradient)(x),
        }
    }

    /// `λ_max`: 0 for a half-space, `2·λ_max(W)` for a concave quadratic.
    pub fn hessian_bound(&self) -> Result<f64> {
        match self {
            Barrier::HalfSpace { .. } => Ok(0.0),
            Barrier::ConcaveQuadratic { w, .. } => Ok(2.0 * max_sym_eigenvalue(w)),
            Barrier::Generic(g) => g
                .lambda_max
                .ok_or_else(|| Error::Config("generic barrier requires a Hessian bound λ_max".into())),
        }
    }

    /// `E[h(x)]` for `x ~ N(mean, cov)`, exact for the closed-form classes:
    /// `h(μ)` for a half-space, `h(μ) − tr(WΣ)` for a concave quadratic.
    /// `None` for generic barriers.
    pub fn gaussian_expectation(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Option<f64>> {
        check_len("mean", mean, self.dim())?;
        check_square("covariance", cov, self.dim())?;
        Ok(match self {
            Barrier::HalfSpace { .. } => Some(self.eval(mean)),
            Barrier::ConcaveQuadratic { w, .. } => Some(self.eval(mean) - (w * cov).trace()),
            Barrier::Generic(_) => None,
        })
    }

    /// Jensen lower bound `h(μ) − ½ λ_max tr(Σ)` on `E[h(x)]`.
    pub fn jensen_lower_bound(&self, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
        check_len("mean", mean, self.dim())?;
        check_square("covariance", cov, self.dim())?;
        Ok(self.eval(mean) - 0.5 * self.hessian_bound()? * cov.trace())
    }

    /// Global upper bound `M`. A half-space is unbounded above, so the
    /// scenario must supply `fallback_m`.
    pub fn upper_bound(&self, fallback_m: Option<f64>) -> Result<f64> {
        match self {
            Barrier::ConcaveQuadratic { c0, .. } => Ok(*c0),
            Barrier::HalfSpace { .. } => fallback_m.ok_or_else(|| {
                Error::Config(
                    "half-space barriers are unbounded above; set barrier.fallback_M to the bound used for c_J^max"
                        .into(),
                )
            }),
            Barrier::Generic(g) => g
                .upper_bound
                .ok_or_else(|| Error::Config("generic barrier requires an upper bound M".into())),
        }
    }
}
