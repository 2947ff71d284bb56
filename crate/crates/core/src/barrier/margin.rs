//! Estimation-error margin: the radius `γ` that bounds `‖x_k − x̂_k‖` over the
//! horizon with probability `1 − σ`, the inflation `h_γ` of `h` over
//! `γ`-balls around its zero level set, and the shifted barrier
//! `ĥ = h − h_γ` evaluated on estimates.

use nalgebra::{DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use super::Barrier;
use crate::error::{Error, Result};
use crate::kalman::FilterSchedule;
use crate::linalg::{max_sym_eigenvalue, psd_sqrt, symmetrize};
use crate::rng::{mix, seeded, standard_normals};
use crate::stats::chi_square_quantile;
use crate::system::LinearSystem;

/// How `γ` is chosen for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaMode {
    /// Per-step chi-square tail bound with a union bound over the horizon.
    Analytic,
    /// Empirical `1 − σ` quantile of `sup_k ‖e_k‖` over simulated
    /// estimation-error trajectories.
    MonteCarlo { draws: usize, seed: u64 },
    /// Fixed by the user.
    Fixed(f64),
}

impl GammaMode {
    pub fn name(&self) -> &'static str {
        match self {
            GammaMode::Analytic => "analytic",
            GammaMode::MonteCarlo { .. } => "montecarlo",
            GammaMode::Fixed(_) => "fixed",
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Config(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    Ok(())
}

fn check_horizon(sched: &FilterSchedule, horizon: usize) -> Result<()> {
    if horizon > sched.horizon() {
        return Err(Error::Config(format!(
            "filter schedule covers {} steps, γ requested over {horizon}",
            sched.horizon()
        )));
    }
    Ok(())
}

/// `max_k sqrt(χ²_n(1 − σ/(K+1)) · λ_max(P_k))` over `k = 0..=K`.
pub fn compute_gamma(sched: &FilterSchedule, sigma: f64, horizon: usize) -> Result<f64> {
    check_sigma(sigma)?;
    check_horizon(sched, horizon)?;
    let n = sched.covariance(0).nrows();
    let q = chi_square_quantile(n, 1.0 - sigma / (horizon as f64 + 1.0))?;
    let worst = sched.covariances()[..=horizon]
        .iter()
        .map(max_sym_eigenvalue)
        .fold(0.0, f64::max);
    Ok((q * worst.max(0.0)).sqrt())
}

/// Simulates `e_{k+1} = (A − K C) e_k + w_k − K v_k` with `e_0 ~ N(0, P_0)`
/// and returns the empirical `1 − σ` quantile of `max_k ‖e_k‖`.
pub fn compute_gamma_montecarlo(
    sys: &LinearSystem,
    sched: &FilterSchedule,
    sigma: f64,
    horizon: usize,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_sigma(sigma)?;
    check_horizon(sched, horizon)?;
    if draws == 0 {
        return Err(Error::Config("γ calibration needs at least one draw".into()));
    }
    let n = sys.state_dim();
    let ny = sys.output_dim();
    let mut closed = Vec::with_capacity(horizon);
    let mut w_factor = Vec::with_capacity(horizon);
    let mut v_factor = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let gain = sched.gain(k);
        closed.push(sys.a(k)? - gain * sys.c(k)?);
        w_factor.push(psd_sqrt(sys.q(k)?));
        v_factor.push(gain * psd_sqrt(sys.r(k)?));
    }
    let p0_factor = psd_sqrt(sched.covariance(0));

    let mut sups: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|draw| {
            let mut rng = seeded(mix(seed, draw));
            let mut e = &p0_factor * standard_normals(&mut rng, n);
            let mut sup = e.norm();
            for k in 0..horizon {
                let w = &w_factor[k] * standard_normals(&mut rng, n);
                let v = &v_factor[k] * standard_normals(&mut rng, ny);
                e = &closed[k] * e + w - v;
                sup = sup.max(e.norm());
            }
            sup
        })
        .collect();
    sups.sort_by(|a, b| a.total_cmp(b));
    let rank = (((1.0 - sigma) * draws as f64).ceil() as usize).clamp(1, draws);
    Ok(sups[rank - 1])
}

/// Knobs for the numeric `h_γ` search.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSearch {
    pub samples: usize,
    pub iterations: usize,
    /// Initial ascent step as a fraction of `γ`.
    pub step_fraction: f64,
    pub seed: u64,
}

impl Default for LevelSetSearch {
    fn default() -> Self {
        Self {
            samples: 4096,
            iterations: 100,
            step_fraction: 0.1,
            seed: 0x6a09_e667,
        }
    }
}

/// `sup { h(x) : ‖x − x⁰‖ ≤ γ, h(x⁰) = 0 }`.
pub fn compute_h_gamma(bar: &Barrier, gamma: f64, search: &LevelSetSearch) -> Result<f64> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!(
            "γ must be a finite nonnegative number, got {gamma}"
        )));
    }
    match bar {
        Barrier::HalfSpace { a, .. } => Ok(gamma * a.norm()),
        _ => {
            let points = level_set_points(bar, search)?;
            if gamma == 0.0 {
                return Ok(0.0);
            }
            let best = points
                .iter()
                .map(|x0| ascend_in_ball(bar, x0, gamma, search))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(best.max(0.0))
        }
    }
}

fn search_directions(n: usize, extra: &[DVector<f64>], search: &LevelSetSearch) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(search.samples + 2 * extra.len());
    match n {
        1 => {
            dirs.push(DVector::from_element(1, 1.0));
            dirs.push(DVector::from_element(1, -1.0));
        }
        2 => {
            let count = search.samples.max(4);
            for i in 0..count {
                let t = std::f64::consts::TAU * i as f64 / count as f64;
                dirs.push(DVector::from_vec(vec![t.cos(), t.sin()]));
            }
        }
        _ => {
            let mut rng = seeded(search.seed);
            while dirs.len() < search.samples {
                let d = DVector::from_fn(n, |_, _| {
                    let (u1, u2): (f64, f64) = (1.0 - rng.random::<f64>(), rng.random::<f64>());
                    crate::rng::box_muller(u1, u2).0
                });
                let norm = d.norm();
                if norm > 1e-12 {
                    dirs.push(d / norm);
                }
            }
        }
    }
    for e in extra {
        dirs.push(e.clone());
        dirs.push(-e);
    }
    dirs
}

fn level_set_points(bar: &Barrier, search: &LevelSetSearch) -> Result<Vec<DVector<f64>>> {
    let points: Vec<DVector<f64>> = match bar {
        Barrier::HalfSpace { a, b } => vec![a * (-b / a.norm_squared())],
        Barrier::ConcaveQuadratic { c0, w, center } => {
            let eig = SymmetricEigen::new(symmetrize(w));
            let axes: Vec<DVector<f64>> = eig.eigenvectors.column_iter().map(|c| c.into_owned()).collect();
            search_directions(center.len(), &axes, search)
                .into_iter()
                .filter_map(|d| {
                    let curvature = d.dot(&(w * &d));
                    (curvature > 1e-300).then(|| center + d * (c0 / curvature).sqrt())
                })
                .collect()
        }
        Barrier::Generic(g) => {
            let anchor = &g.anchor;
            search_directions(g.dim, &[], search)
                .into_iter()
                .filter_map(|d| ray_crossing(|x| (g.value)(x), anchor, &d))
                .collect()
        }
    };
    if points.is_empty() {
        return Err(Error::Config("the barrier's zero level set is empty".into()));
    }
    Ok(points)
}

/// Zero crossing of `h` along `anchor + t d`, `t > 0`, by doubling and
/// bisection.
fn ray_crossing(h: impl Fn(&DVector<f64>) -> f64, anchor: &DVector<f64>, d: &DVector<f64>) -> Option<DVector<f64>> {
    let mut hi = 1.0;
    let mut found = false;
    for _ in 0..64 {
        if h(&(anchor + d * hi)) < 0.0 {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return None;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if h(&(anchor + d * mid)) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(anchor + d * lo)
}

/// Projected normalized-gradient ascent of `h` over the `γ`-ball around
/// `x0`, halving the step whenever it fails to improve.
fn ascend_in_ball(bar: &Barrier, x0: &DVector<f64>, gamma: f64, search: &LevelSetSearch) -> f64 {
    let project = |x: DVector<f64>| -> DVector<f64> {
        let d = &x - x0;
        let dist = d.norm();
        if dist > gamma {
            x0 + d * (gamma / dist)
        } else {
            x
        }
    };
    let mut x = x0.clone();
    let mut best = bar.eval(&x);
    let g0 = bar.gradient(x0);
    if g0.norm() > 0.0 {
        let start = x0 + &g0 * (gamma / g0.norm());
        let h = bar.eval(&start);
        if h > best {
            best = h;
            x = start;
        }
    }
    let mut step = search.step_fraction * gamma;
    for _ in 0..search.iterations {
        let g = bar.gradient(&x);
        let norm = g.norm();
        if norm == 0.0 {
            break;
        }
        let cand = project(&x + g * (step / norm));
        let h = bar.eval(&cand);
        if h > best {
            best = h;
            x = cand;
        } else {
            step *= 0.5;
        }
    }
    best
}

/// A barrier shifted by the estimation margin: `ĥ(x) = h(x) − h_γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedBarrier {
    pub base: Barrier,
    pub gamma: f64,
    pub h_gamma: f64,
    pub sigma: f64,
}

impl ShiftedBarrier {
    pub fn new(base: Barrier, gamma: f64, sigma: f64, search: &LevelSetSearch) -> Result<Self> {
        let h_gamma = compute_h_gamma(&base, gamma, search)?;
        Ok(Self {
            base,
            gamma,
            h_gamma,
            sigma,
        })
    }

    /// No estimation margin: `ĥ = h`.
    pub fn unshifted(base: Barrier) -> Self {
        Self {
            base,
            gamma: 0.0,
            h_gamma: 0.0,
            sigma: 0.0,
        }
    }

    pub fn eval_h_hat(&self, x: &DVector<f64>) -> f64 {
        self.base.eval(x) - self.h_gamma
    }
}
