//! Seeded closed-loop Monte Carlo: plant, Kalman predictor and safety filter
//! driven by counter-based noise streams.
//!
//! A [`Scenario`] is prepared once ([`PreparedScenario`]): the filter
//! schedule, `γ`, `h_γ`, the per-step `c′_J` and the exit-probability
//! certificate. Trials then only simulate.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::{compute_gamma, compute_gamma_montecarlo, Barrier, GammaMode, LevelSetSearch, ShiftedBarrier};
use crate::bounds::{exit_bound, BoundInput, BoundResult};
use crate::error::{Error, Result};
use crate::filter::{
    compute_cj_max, compute_cj_max_state, compute_delta_prime, compute_delta_state, resolve_cj, solve_safe_input,
    CjSpec, FeedbackMode, SafetyParams,
};
use crate::kalman::{build_filter_schedule, predictor_update, FilterSchedule};
use crate::linalg::{check_len, check_psd, check_square, psd_sqrt};
use crate::lqr::{NominalController, ResolvedController};
use crate::rng::{trial_seed, Channel, NoiseStream};
use crate::stats::{percentile, wilson_interval, CompensatedSum};
use crate::system::LinearSystem;

pub const DEFAULT_HORIZON: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sys: LinearSystem,
    pub barrier: Barrier,
    pub nominal: NominalController,
    pub params: SafetyParams,
    pub gamma_mode: GammaMode,
    pub level_set: LevelSetSearch,
    /// True initial state.
    pub x0: DVector<f64>,
    /// Initial estimate `x̂_0`.
    pub xhat0: DVector<f64>,
    pub p0: DMatrix<f64>,
    /// Draw `x_0 ~ N(x̂_0, P_0)` per trial instead of using `x0`.
    pub sample_x0: bool,
    pub horizon: usize,
    /// Upper bound `M` for barriers that are unbounded above.
    pub fallback_m: Option<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.sys.state_dim();
        if self.horizon == 0 {
            return Err(Error::Config("horizon T must be at least 1".into()));
        }
        self.barrier.validate()?;
        if self.barrier.dim() != n {
            return Err(Error::Config(format!(
                "barrier is defined on R^{} but the state is R^{n}",
                self.barrier.dim()
            )));
        }
        self.params.validate()?;
        check_len("x0", &self.x0, n)?;
        check_len("xhat0", &self.xhat0, n)?;
        check_square("P0", &self.p0, n)?;
        check_psd("P0", &self.p0)?;
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!(
                    "fixed γ must be finite and nonnegative, got {g}"
                )));
            }
        }
        if let GammaMode::MonteCarlo { draws: 0, .. } = self.gamma_mode {
            return Err(Error::Config("gamma_draws must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the theory says about a prepared scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub mode: &'static str,
    pub gamma_mode: &'static str,
    pub gamma: f64,
    /// False when `γ` was fixed by hand: the `σ` term of the bound then
    /// rests on an unchecked coverage claim.
    pub gamma_calibrated: bool,
    pub h_gamma: f64,
    pub m: f64,
    /// `M − h_γ` (output feedback) or `M`.
    pub m_eff: f64,
    pub lambda_max: f64,
    pub alpha: f64,
    pub sigma: f64,
    /// `ĥ(x̂_0)` (output feedback) or `h(x_0)`.
    pub h0_eff: f64,
    pub cj_max: Vec<f64>,
    pub cj: Vec<f64>,
    /// Per-step `δ′_k` (or `δ_k`); the bound uses their minimum.
    pub delta: Vec<f64>,
    pub delta_min: f64,
    pub bound: BoundResult,
}

#[derive(Debug, Clone)]
pub struct PreparedScenario {
    scenario: Scenario,
    schedule: FilterSchedule,
    shifted: ShiftedBarrier,
    controller: ResolvedController,
    w_factors: Vec<DMatrix<f64>>,
    v_factors: Vec<DMatrix<f64>>,
    certificate: Certificate,
}

/// Outcome of one closed-loop trial. Equality ignores the wall-clock timing.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub safe: bool,
    pub min_h: f64,
    pub exit_step: Option<usize>,
    pub infeasible_steps: usize,
    pub uncertified_steps: usize,
    pub mean_solve_time: Duration,
}

impl PartialEq for TrialResult {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.safe == other.safe
            && self.min_h.to_bits() == other.min_h.to_bits()
            && self.exit_step == other.exit_step
            && self.infeasible_steps == other.infeasible_steps
            && self.uncertified_steps == other.uncertified_steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub k: usize,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    /// Absent at the terminal step.
    pub u: Option<DVector<f64>>,
    pub y: Option<DVector<f64>>,
    pub h: f64,
    pub h_hat: f64,
}

pub type Trajectory = Vec<TrajectoryStep>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCSummary {
    pub trials: usize,
    pub safe_count: usize,
    pub p_safe_hat: f64,
    pub wilson_ci95: [f64; 2],
    /// `exit_step_histogram[k]` trials first left the safe set at step `k`.
    pub exit_step_histogram: Vec<usize>,
    pub infeasible_steps: usize,
    pub trials_with_infeasible: usize,
    pub uncertified_steps: usize,
    pub min_h_mean: f64,
    /// Mean over all filter solves.
    pub solve_ms_mean: f64,
    /// Percentiles of the per-trial mean solve time.
    pub solve_ms_p50: f64,
    pub solve_ms_p95: f64,
    pub p_safe_theory: f64,
    pub theory_vacuous: bool,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub trials: Vec<TrialResult>,
    /// Filled only when trajectories were requested.
    pub trajectories: Vec<Trajectory>,
    pub summary: MCSummary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub log_trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub k_j: f64,
    pub certificate: Certificate,
    pub summary: MCSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub x0: Vec<f64>,
    pub h0_eff: f64,
    pub p_hat: f64,
    pub p_theory: f64,
    pub vacuous: bool,
    pub summary: MCSummary,
}

impl PreparedScenario {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let sys = &scenario.sys;
        let horizon = scenario.horizon;
        let schedule = build_filter_schedule(sys, &scenario.p0, horizon)?;
        let shifted = match scenario.params.mode {
            FeedbackMode::StateFeedback => ShiftedBarrier::unshifted(scenario.barrier.clone()),
            FeedbackMode::OutputFeedback => {
                let sigma = scenario.params.sigma;
                let gamma = match scenario.gamma_mode {
                    GammaMode::Analytic => compute_gamma(&schedule, sigma, horizon)?,
                    GammaMode::MonteCarlo { draws, seed } => {
                        compute_gamma_montecarlo(sys, &schedule, sigma, horizon, draws, seed)?
                    }
                    GammaMode::Fixed(g) => g,
                };
                ShiftedBarrier::new(scenario.barrier.clone(), gamma, sigma, &scenario.level_set)?
            }
        };
        let controller = scenario.nominal.resolve(sys)?;
        let mut w_factors = Vec::with_capacity(horizon);
        let mut v_factors = Vec::with_capacity(horizon);
        for k in 0..horizon {
            w_factors.push(psd_sqrt(sys.q(k)?));
            v_factors.push(psd_sqrt(sys.r(k)?));
        }
        let certificate = certify(&scenario, &schedule, &shifted)?;
        Ok(Self {
            scenario,
            schedule,
            shifted,
            controller,
            w_factors,
            v_factors,
            certificate,
        })
    }

    /// Same plant, schedule and margins under a different `(α, c′_J)`.
    pub fn with_safety(&self, alpha: f64, cj: CjSpec) -> Result<Self> {
        let mut next = self.clone();
        next.scenario.params.alpha = alpha;
        next.scenario.params.cj = cj;
        next.scenario.params.validate()?;
        next.certificate = certify(&next.scenario, &next.schedule, &next.shifted)?;
        Ok(next)
    }

    /// Same scenario started from `x0` with `x̂_0 = x0`.
    pub fn with_initial_state(&self, x0: DVector<f64>) -> Result<Self> {
        check_len("x0", &x0, self.scenario.sys.state_dim())?;
        let mut next = self.clone();
        next.scenario.xhat0 = x0.clone();
        next.scenario.x0 = x0;
        next.certificate = certify(&next.scenario, &next.schedule, &next.shifted)?;
        Ok(next)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn schedule(&self) -> &FilterSchedule {
        &self.schedule
    }

    pub fn shifted(&self) -> &ShiftedBarrier {
        &self.shifted
    }

    pub fn controller(&self) -> &ResolvedController {
        &self.controller
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn run_trial(&self, seed: u64) -> Result<TrialResult> {
        self.simulate(seed, false).map(|(r, _)| r)
    }

    pub fn run_trial_logged(&self, seed: u64) -> Result<(TrialResult, Trajectory)> {
        self.simulate(seed, true)
    }

    fn simulate(&self, seed: u64, log: bool) -> Result<(TrialResult, Trajectory)> {
        let scn = &self.scenario;
        let sys = &scn.sys;
        let (n, ny) = (sys.state_dim(), sys.output_dim());
        let stream = NoiseStream::new(seed);
        let output_mode = scn.params.mode == FeedbackMode::OutputFeedback;

        let mut xhat = scn.xhat0.clone();
        let mut x = if scn.sample_x0 {
            &xhat + psd_sqrt(&scn.p0) * stream.standard_normals(0, Channel::InitialState, n)
        } else {
            scn.x0.clone()
        };

        let mut trajectory = Vec::new();
        let mut min_h = f64::INFINITY;
        let mut exit_step = None;
        let mut infeasible_steps = 0;
        let mut uncertified_steps = 0;
        let mut solve_total = Duration::ZERO;

        for k in 0..=scn.horizon {
            let h = scn.barrier.eval(&x);
            if h < min_h {
                min_h = h;
            }
            if h < 0.0 && exit_step.is_none() {
                exit_step = Some(k);
            }
            if k == scn.horizon {
                if log {
                    trajectory.push(TrajectoryStep {
                        k,
                        h_hat: self.shifted.eval_h_hat(&xhat),
                        x,
                        xhat,
                        u: None,
                        y: None,
                        h,
                    });
                }
                break;
            }

            let state = if output_mode { &xhat } else { &x };
            let u_nom = self.controller.control(state);
            let step = solve_safe_input(
                &self.shifted,
                &scn.params,
                self.certificate.cj[k],
                sys.a(k)?,
                sys.b(k)?,
                state,
                &u_nom,
            )?;
            solve_total += step.solve_time;
            if !step.feasible {
                infeasible_steps += 1;
            }
            if !step.certified {
                uncertified_steps += 1;
            }
            let u = step.u_star;

            let w = &self.w_factors[k] * stream.standard_normals(k as u64, Channel::Process, n);
            let v = &self.v_factors[k] * stream.standard_normals(k as u64, Channel::Measurement, ny);
            let y = sys.measure(k, &x, &v)?;
            let x_next = sys.dynamics_step(k, &x, &u, &w)?;
            let xhat_next = predictor_update(&xhat, &u, &y, k, sys, &self.schedule)?;
            if log {
                trajectory.push(TrajectoryStep {
                    k,
                    h_hat: self.shifted.eval_h_hat(&xhat),
                    x,
                    xhat,
                    u: Some(u),
                    y: Some(y),
                    h,
                });
            }
            x = x_next;
            xhat = xhat_next;
        }

        let result = TrialResult {
            seed,
            safe: exit_step.is_none(),
            min_h,
            exit_step,
            infeasible_steps,
            uncertified_steps,
            mean_solve_time: solve_total / scn.horizon as u32,
        };
        Ok((result, trajectory))
    }
}

fn certify(scn: &Scenario, sched: &FilterSchedule, shifted: &ShiftedBarrier) -> Result<Certificate> {
    let sys = &scn.sys;
    let params = &scn.params;
    let m = scn.barrier.upper_bound(scn.fallback_m)?;
    let lambda_max = scn.barrier.hessian_bound()?;
    let output_mode = params.mode == FeedbackMode::OutputFeedback;
    let mut cj_max = Vec::with_capacity(scn.horizon);
    let mut cj = Vec::with_capacity(scn.horizon);
    let mut delta = Vec::with_capacity(scn.horizon);
    for k in 0..scn.horizon {
        let (ceiling, resolved, d) = if output_mode {
            let (gain, r, c, p) = (sched.gain(k), sys.r(k)?, sys.c(k)?, sched.covariance(k));
            let ceiling = compute_cj_max(m, shifted.h_gamma, params.alpha, lambda_max, gain, r, c, p)?;
            let resolved = resolve_cj(params, ceiling);
            (
                ceiling,
                resolved,
                compute_delta_prime(resolved, lambda_max, gain, r, c, p),
            )
        } else {
            let q = sys.q(k)?;
            let ceiling = compute_cj_max_state(m, params.alpha, lambda_max, q)?;
            let resolved = resolve_cj(params, ceiling);
            (ceiling, resolved, compute_delta_state(resolved, lambda_max, q))
        };
        cj_max.push(ceiling);
        cj.push(resolved);
        delta.push(d);
    }
    let delta_min = delta.iter().copied().fold(f64::INFINITY, f64::min);
    let (m_eff, h0_eff, sigma) = if output_mode {
        (m - shifted.h_gamma, shifted.eval_h_hat(&scn.xhat0), params.sigma)
    } else {
        (m, scn.barrier.eval(&scn.x0), 0.0)
    };
    let bound = exit_bound(&BoundInput {
        m_eff,
        h0_eff,
        alpha: params.alpha,
        delta: delta_min,
        horizon: scn.horizon,
        sigma,
    })?;
    Ok(Certificate {
        mode: if output_mode {
            "output_feedback"
        } else {
            "state_feedback"
        },
        gamma_mode: if output_mode { scn.gamma_mode.name() } else { "none" },
        gamma: shifted.gamma,
        gamma_calibrated: !output_mode || !matches!(scn.gamma_mode, GammaMode::Fixed(_)),
        h_gamma: shifted.h_gamma,
        m,
        m_eff,
        lambda_max,
        alpha: params.alpha,
        sigma,
        h0_eff,
        cj_max,
        cj,
        delta,
        delta_min,
        bound,
    })
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

pub fn run_batch(prep: &PreparedScenario, trials: usize, master_seed: u64, opts: BatchOptions) -> Result<Batch> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let outcomes: Vec<Result<(TrialResult, Trajectory)>> = in_pool(opts.workers, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|i| prep.simulate(trial_seed(master_seed, i), opts.log_trajectories))
            .collect()
    })?;
    let mut results = Vec::with_capacity(trials);
    let mut trajectories = Vec::new();
    for outcome in outcomes {
        let (r, t) = outcome?;
        results.push(r);
        if opts.log_trajectories {
            trajectories.push(t);
        }
    }
    let summary = summarize(&results, prep.scenario.horizon, &prep.certificate);
    Ok(Batch {
        trials: results,
        trajectories,
        summary,
    })
}

/// Aggregates trial outcomes in index order.
pub fn summarize(results: &[TrialResult], horizon: usize, cert: &Certificate) -> MCSummary {
    let trials = results.len();
    let safe_count = results.iter().filter(|r| r.safe).count();
    let mut histogram = vec![0; horizon + 1];
    for k in results.iter().filter_map(|r| r.exit_step) {
        histogram[k.min(horizon)] += 1;
    }
    let per_trial_ms: Vec<f64> = results.iter().map(|r| r.mean_solve_time.as_secs_f64() * 1e3).collect();
    let mean_of = |xs: &mut dyn Iterator<Item = f64>| xs.collect::<CompensatedSum>().value() / trials.max(1) as f64;
    let (lo, hi) = wilson_interval(safe_count, trials);
    MCSummary {
        trials,
        safe_count,
        p_safe_hat: safe_count as f64 / trials as f64,
        wilson_ci95: [lo, hi],
        exit_step_histogram: histogram,
        infeasible_steps: results.iter().map(|r| r.infeasible_steps).sum(),
        trials_with_infeasible: results.iter().filter(|r| r.infeasible_steps > 0).count(),
        uncertified_steps: results.iter().map(|r| r.uncertified_steps).sum(),
        min_h_mean: mean_of(&mut results.iter().map(|r| r.min_h)),
        // every trial runs the same number of solves
        solve_ms_mean: mean_of(&mut per_trial_ms.iter().copied()),
        solve_ms_p50: percentile(&per_trial_ms, 0.5),
        solve_ms_p95: percentile(&per_trial_ms, 0.95),
        p_safe_theory: cert.bound.p_safe_lower,
        theory_vacuous: cert.bound.vacuous,
    }
}

/// One batch per `(α, k_J)` point; the filter schedule and margins are
/// computed once.
pub fn sweep_params(
    prep: &PreparedScenario,
    grid: &[(f64, f64)],
    trials: usize,
    master_seed: u64,
    opts: BatchOptions,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let opts = BatchOptions {
        log_trajectories: false,
        ..opts
    };
    grid.iter()
        .map(|&(alpha, k_j)| {
            let point = prep.with_safety(alpha, CjSpec::Fraction(k_j))?;
            let batch = run_batch(&point, trials, master_seed, opts)?;
            Ok(SweepPoint {
                alpha,
                k_j,
                certificate: point.certificate,
                summary: batch.summary,
            })
        })
        .collect()
}

/// Empirical and certified safety probability from each initial state
/// (with `x̂_0 = x_0`). Every cell reuses `master_seed`.
pub fn grid_initial_states(
    prep: &PreparedScenario,
    cells: &[DVector<f64>],
    trials: usize,
    master_seed: u64,
    opts: BatchOptions,
) -> Result<Vec<GridCell>> {
    let opts = BatchOptions {
        log_trajectories: false,
        ..opts
    };
    cells
        .iter()
        .map(|x0| {
            let cell = prep.with_initial_state(x0.clone())?;
            let batch = run_batch(&cell, trials, master_seed, opts)?;
            let bound = cell.certificate.bound;
            Ok(GridCell {
                x0: x0.iter().copied().collect(),
                h0_eff: cell.certificate.h0_eff,
                p_hat: batch.summary.p_safe_hat,
                p_theory: bound.p_safe_lower,
                vacuous: bound.vacuous,
                summary: batch.summary,
            })
        })
        .collect()
}

/// Row-major lattice over a 2-D box, `counts = (n1, n2)` points per axis.
pub fn lattice_2d(lo: [f64; 2], hi: [f64; 2], counts: [usize; 2]) -> Vec<DVector<f64>> {
    let axis = |i: usize| -> Vec<f64> {
        let c = counts[i].max(1);
        if c == 1 {
            return vec![0.5 * (lo[i] + hi[i])];
        }
        (0..c)
            .map(|j| lo[i] + (hi[i] - lo[i]) * j as f64 / (c - 1) as f64)
            .collect()
    };
    let (a1, a2) = (axis(0), axis(1));
    a1.iter()
        .flat_map(|&p| a2.iter().map(move |&q| DVector::from_vec(vec![p, q])))
        .collect()
}
