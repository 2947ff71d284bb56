//! Minimally invasive safety filter.
//!
//! Each step solves `min ‖u − u_nom‖²` subject to the barrier constraint
//! `ĥ(A x̂ + B u) − c′_J ≥ α ĥ(x̂)` (or its state-feedback counterpart on `h`
//! and `x`). Half-space barriers reduce to a projection onto a half-space of
//! the input space; concave quadratics to a single-constraint QCQP solved by
//! multiplier bisection in the eigenbasis of `BᵀWB`.

use std::time::{Duration, Instant};

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::barrier::{Barrier, ShiftedBarrier};
use crate::error::{Error, Result};
use crate::linalg::{check_len, symmetrize};

/// Feasible results must satisfy the constraint to within this slack.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Residual tolerance of the multiplier bisection.
pub const QCQP_TOL: f64 = 1e-10;
pub const QCQP_MAX_ITER: usize = 200;
pub const DEFAULT_INPUT_BOX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CjSpec {
    /// Absolute `c′_J`, clamped into `[0, c_J^max]`.
    Absolute(f64),
    /// `c′_J = k_J · c_J^max`.
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// Constraint on `ĥ` at the Kalman prediction `x̂`.
    OutputFeedback,
    /// Constraint on `h` at the true state.
    StateFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasiblePolicy {
    /// Return the input that minimizes the constraint violation.
    LeastViolation,
    /// Fall back to the nominal input.
    Nominal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyParams {
    pub alpha: f64,
    pub cj: CjSpec,
    pub sigma: f64,
    pub mode: FeedbackMode,
    pub infeasible_policy: InfeasiblePolicy,
    /// `‖u‖∞` cap used only by the half-space least-violation fallback.
    pub input_box: f64,
}

impl SafetyParams {
    pub fn new(alpha: f64, cj: CjSpec, sigma: f64, mode: FeedbackMode) -> Result<Self> {
        let params = Self {
            alpha,
            cj,
            sigma,
            mode,
            infeasible_policy: InfeasiblePolicy::LeastViolation,
            input_box: DEFAULT_INPUT_BOX,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        match self.cj {
            CjSpec::Fraction(k) if !(0.0..=1.0).contains(&k) => {
                return Err(Error::Config(format!("k_J must lie in [0, 1], got {k}")));
            }
            CjSpec::Absolute(c) if !(c >= 0.0) => {
                return Err(Error::Config(format!("c_J must be nonnegative, got {c}")));
            }
            _ => {}
        }
        if self.mode == FeedbackMode::OutputFeedback && !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.input_box > 0.0) {
            return Err(Error::Config("input_box must be positive".into()));
        }
        Ok(())
    }
}

/// `½ λ_max [tr(K R Kᵀ) + tr(K C P Cᵀ Kᵀ)]`: the Jensen penalty for the
/// randomness of the next Kalman prediction.
pub fn output_jensen_correction(
    lambda_max: f64,
    gain: &DMatrix<f64>,
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let noise = (gain * r * gain.transpose()).trace();
    let error = (gain * c * p * c.transpose() * gain.transpose()).trace();
    0.5 * lambda_max * (noise + error)
}

/// `(M − h_γ)(1 − α) + ½ λ_max tr(K R Kᵀ) + ½ λ_max tr(K C P Cᵀ Kᵀ)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_cj_max(
    m: f64,
    h_gamma: f64,
    alpha: f64,
    lambda_max: f64,
    gain: &DMatrix<f64>,
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    if !(m > h_gamma) {
        return Err(Error::Config(format!(
            "M = {m} does not exceed h_γ = {h_gamma}: the estimation margin swallows the safe set"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok((m - h_gamma) * (1.0 - alpha) + output_jensen_correction(lambda_max, gain, r, c, p))
}

/// `M (1 − α) + ½ λ_max tr(Q)`: the state-feedback ceiling on `c_J`.
pub fn compute_cj_max_state(m: f64, alpha: f64, lambda_max: f64, q: &DMatrix<f64>) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::Config(format!("M must be positive, got {m}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(m * (1.0 - alpha) + 0.5 * lambda_max * q.trace())
}

/// `δ′ = c′_J − ½ λ_max tr(K R Kᵀ) − ½ λ_max tr(K C P Cᵀ Kᵀ)`, the largest
/// admissible expectation margin. May be negative.
pub fn compute_delta_prime(
    cj: f64,
    lambda_max: f64,
    gain: &DMatrix<f64>,
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    cj - output_jensen_correction(lambda_max, gain, r, c, p)
}

/// `δ = c_J − ½ λ_max tr(Q)` for state feedback.
pub fn compute_delta_state(cj: f64, lambda_max: f64, q: &DMatrix<f64>) -> f64 {
    cj - 0.5 * lambda_max * q.trace()
}

/// Resolves the configured `c′_J` against the ceiling of the current step.
pub fn resolve_cj(params: &SafetyParams, cj_max: f64) -> f64 {
    match params.cj {
        CjSpec::Fraction(k) => k * cj_max,
        CjSpec::Absolute(c) => {
            let clamped = c.clamp(0.0, cj_max.max(0.0));
            if clamped != c {
                warn!("c_J = {c} outside [0, {cj_max}]; clamped to {clamped}");
            }
            clamped
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStepResult {
    pub u_star: DVector<f64>,
    pub feasible: bool,
    /// `[ĥ(A x̂ + B u*) − c′_J] − α ĥ(x̂)`; nonnegative when the constraint holds.
    pub constraint_slack: f64,
    pub solve_time: Duration,
    /// False for generic barriers, where the solve is best effort.
    pub certified: bool,
}

/// One safety-filter solve. `state` is `x̂` in output-feedback mode and the
/// true `x` in state-feedback mode; in state-feedback mode the shift `h_γ`
/// is ignored.
#[allow(clippy::too_many_arguments)]
pub fn solve_safe_input(
    sb: &ShiftedBarrier,
    params: &SafetyParams,
    cj: f64,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    state: &DVector<f64>,
    u_nom: &DVector<f64>,
) -> Result<FilterStepResult> {
    let started = Instant::now();
    check_len("filter state", state, a.nrows())?;
    check_len("nominal input", u_nom, b.ncols())?;
    let h_gamma = match params.mode {
        FeedbackMode::OutputFeedback => sb.h_gamma,
        FeedbackMode::StateFeedback => 0.0,
    };
    let drift = a * state;
    let h_now = sb.base.eval(state) - h_gamma;
    // constraint: h(drift + B u) ≥ required
    let required = params.alpha * h_now + cj + h_gamma;

    let (u_star, feasible, certified) = match &sb.base {
        Barrier::HalfSpace { a: normal, b: offset } => {
            let (u, ok) = project_half_space(normal, *offset, &drift, b, required, u_nom, params);
            (u, ok, true)
        }
        Barrier::ConcaveQuadratic { c0, w, center } => {
            let (u, ok) = project_ellipsoid(w, &(&drift - center), b, c0 - required, u_nom, params);
            (u, ok, true)
        }
        Barrier::Generic(_) => {
            let (u, ok) = sequential_linearization(&sb.base, &drift, b, required, u_nom, params);
            (u, ok, false)
        }
    };
    let slack = sb.base.eval(&(&drift + b * &u_star)) - required;
    Ok(FilterStepResult {
        feasible: feasible && slack >= -FEASIBILITY_TOL,
        u_star,
        constraint_slack: slack,
        solve_time: started.elapsed(),
        certified,
    })
}

fn clamp_box(u: DVector<f64>, limit: f64) -> DVector<f64> {
    u.map(|v| v.clamp(-limit, limit))
}

/// `gᵀu ≥ rhs` with `g = Bᵀa`, `rhs = required − b − aᵀ drift`.
fn project_half_space(
    normal: &DVector<f64>,
    offset: f64,
    drift: &DVector<f64>,
    b: &DMatrix<f64>,
    required: f64,
    u_nom: &DVector<f64>,
    params: &SafetyParams,
) -> (DVector<f64>, bool) {
    let g = b.transpose() * normal;
    let rhs = required - offset - normal.dot(drift);
    let gap = rhs - g.dot(u_nom);
    if gap <= 0.0 {
        return (u_nom.clone(), true);
    }
    let g2 = g.norm_squared();
    if g2 > 0.0 {
        let u = u_nom + &g * (gap / g2);
        if u.amax() <= params.input_box {
            return (u, true);
        }
    }
    let fallback = match params.infeasible_policy {
        InfeasiblePolicy::Nominal => u_nom.clone(),
        // maximize gᵀu over the input box
        InfeasiblePolicy::LeastViolation if g2 > 0.0 => g.map(|gi| params.input_box * gi.signum()),
        InfeasiblePolicy::LeastViolation => clamp_box(u_nom.clone(), params.input_box),
    };
    (fallback, false)
}

/// `min ‖u − u_nom‖²` s.t. `(d + B u)ᵀ W (d + B u) ≤ radius`.
fn project_ellipsoid(
    w: &DMatrix<f64>,
    d: &DVector<f64>,
    b: &DMatrix<f64>,
    radius: f64,
    u_nom: &DVector<f64>,
    params: &SafetyParams,
) -> (DVector<f64>, bool) {
    let residual_at = |u: &DVector<f64>| -> f64 {
        let z = d + b * u;
        z.dot(&(w * &z)) - radius
    };
    if residual_at(u_nom) <= 0.0 {
        return (u_nom.clone(), true);
    }
    let path = MultiplierPath::new(w, d, b, radius, u_nom);
    let least = path.least_violation();
    let to_input = |ut: &[f64]| &path.basis * DVector::from_column_slice(ut);

    if path.residual(&least) > 0.0 {
        let fallback = match params.infeasible_policy {
            InfeasiblePolicy::LeastViolation => to_input(&least),
            InfeasiblePolicy::Nominal => u_nom.clone(),
        };
        return (fallback, false);
    }

    let mut hi = 1.0;
    let mut doublings = 0;
    while path.residual(&path.at(hi)) > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            // boundary-tangent case: the feasible set is (nearly) a single point
            return (to_input(&least), true);
        }
    }
    let mut lo = 0.0;
    for _ in 0..QCQP_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let r = path.residual(&path.at(mid));
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            if r > -QCQP_TOL {
                break;
            }
        }
    }
    let u = to_input(&path.at(hi));
    // guard against eigenbasis round-off
    if residual_at(&u) > FEASIBILITY_TOL {
        return (to_input(&least), path.residual(&least) <= FEASIBILITY_TOL);
    }
    (u, true)
}

/// KKT path of the ellipsoid projection. In the eigenbasis of `H = BᵀWB`
/// the stationary point for multiplier `μ` decouples:
/// `ũ_i(μ) = (ũnom_i − μ g̃_i) / (1 + μ λ_i)`.
struct MultiplierPath {
    basis: DMatrix<f64>,
    lambdas: Vec<f64>,
    g: Vec<f64>,
    nom: Vec<f64>,
    /// `dᵀWd − radius`
    base: f64,
}

impl MultiplierPath {
    fn new(w: &DMatrix<f64>, d: &DVector<f64>, b: &DMatrix<f64>, radius: f64, u_nom: &DVector<f64>) -> Self {
        let wd = w * d;
        let eig = SymmetricEigen::new(symmetrize(&(b.transpose() * w * b)));
        let basis = eig.eigenvectors;
        let g = (basis.transpose() * (b.transpose() * &wd)).iter().copied().collect();
        let nom = (basis.transpose() * u_nom).iter().copied().collect();
        Self {
            lambdas: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(),
            basis,
            g,
            nom,
            base: d.dot(&wd) - radius,
        }
    }

    fn at(&self, mu: f64) -> Vec<f64> {
        (0..self.lambdas.len())
            .map(|i| (self.nom[i] - mu * self.g[i]) / (1.0 + mu * self.lambdas[i]))
            .collect()
    }

    /// `zᵀWz − radius` in eigen-coordinates.
    fn residual(&self, ut: &[f64]) -> f64 {
        self.base
            + ut.iter()
                .zip(&self.lambdas)
                .zip(&self.g)
                .map(|((&u, &l), &g)| l * u * u + 2.0 * g * u)
                .sum::<f64>()
    }

    /// Least-violation point closest to `u_nom`: minimize along the range
    /// of `H`, keep `u_nom` along its null space.
    fn least_violation(&self) -> Vec<f64> {
        let scale = self.lambdas.iter().fold(0.0, |m: f64, &l| m.max(l));
        (0..self.lambdas.len())
            .map(|i| {
                if self.lambdas[i] > 1e-14 * scale.max(1e-300) {
                    -self.g[i] / self.lambdas[i]
                } else {
                    self.nom[i]
                }
            })
            .collect()
    }
}

/// Best-effort projection for generic barriers: repeatedly linearize the
/// constraint at the current iterate and project `u_nom` onto it.
fn sequential_linearization(
    bar: &Barrier,
    drift: &DVector<f64>,
    b: &DMatrix<f64>,
    required: f64,
    u_nom: &DVector<f64>,
    params: &SafetyParams,
) -> (DVector<f64>, bool) {
    let constraint = |u: &DVector<f64>| bar.eval(&(drift + b * u)) - required;
    if constraint(u_nom) >= 0.0 {
        return (u_nom.clone(), true);
    }
    let mut u = u_nom.clone();
    let mut best_violation = (u.clone(), constraint(&u));
    for _ in 0..100 {
        let value = constraint(&u);
        if value > best_violation.1 {
            best_violation = (u.clone(), value);
        }
        let grad = b.transpose() * bar.gradient(&(drift + b * &u));
        let g2 = grad.norm_squared();
        if g2 == 0.0 {
            break;
        }
        // project u_nom onto {v : value + gradᵀ(v − u) ≥ 0}
        let gap = -(value + grad.dot(&(u_nom - &u)));
        let next = if gap > 0.0 {
            u_nom + &grad * (gap / g2)
        } else {
            u_nom.clone()
        };
        let step = (&next - &u).amax();
        u = next;
        if step < 1e-12 && constraint(&u) >= -FEASIBILITY_TOL {
            break;
        }
    }
    if constraint(&u) >= -FEASIBILITY_TOL {
        return (u, true);
    }
    let fallback = match params.infeasible_policy {
        InfeasiblePolicy::LeastViolation => best_violation.0,
        InfeasiblePolicy::Nominal => u_nom.clone(),
    };
    (fallback, false)
}
