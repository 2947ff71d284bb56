//! A user-supplied barrier with bounded curvature: h(x) = cos(x1) + 0.5 cos(x2) − 0.5
//! in closed loop. The filter linearizes it sequentially and flags its
//! solves as uncertified.
//!
//!     cargo run --release --example generic_barrier

use kalman_cbf::barrier::{Barrier, GammaMode, GenericBarrier, LevelSetSearch};
use kalman_cbf::filter::{CjSpec, FeedbackMode, SafetyParams};
use kalman_cbf::lqr::NominalController;
use kalman_cbf::montecarlo::{run_batch, BatchOptions, PreparedScenario, Scenario};
use kalman_cbf::system::LinearSystem;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

fn main() -> kalman_cbf::Result<()> {
    let hook = GenericBarrier::new(
        dvector![0.0, 0.0],
        |x| x[0].cos() + 0.5 * x[1].cos() - 0.5,
        |x| dvector![-x[0].sin(), -0.5 * x[1].sin()],
        |x| DMatrix::from_diagonal(&dvector![-x[0].cos(), -0.5 * x[1].cos()]),
    )
    .with_hessian_bound(1.0)
    .with_upper_bound(1.0);
    let lo = dvector![-4.0, -4.0];
    let hi = dvector![4.0, 4.0];
    hook.check_against_probe_box(&lo, &hi, 20_000, 1)?;

    let q = dmatrix![1e-4, 0.0; 0.0, 1e-3];
    let sys = LinearSystem::new(
        dmatrix![1.0, 0.1; 0.0, 1.0],
        dmatrix![0.005; 0.1],
        dmatrix![1.0, 0.0],
        q.clone(),
        dmatrix![1e-3],
    )?;
    let scenario = Scenario {
        sys,
        barrier: Barrier::Generic(hook),
        // drives toward x1 = 2, outside the safe set
        nominal: NominalController::Lqr {
            q: dmatrix![1.0, 0.0; 0.0, 0.1],
            r: dmatrix![1.0],
            target: dvector![2.0, 0.0],
        },
        params: SafetyParams::new(0.97, CjSpec::Fraction(0.5), 0.05, FeedbackMode::OutputFeedback)?,
        gamma_mode: GammaMode::MonteCarlo { draws: 5000, seed: 7 },
        level_set: LevelSetSearch::default(),
        x0: DVector::zeros(2),
        xhat0: DVector::zeros(2),
        p0: q,
        sample_x0: false,
        horizon: 50,
        fallback_m: None,
    };
    let prep = PreparedScenario::new(scenario)?;
    let cert = prep.certificate();
    println!(
        "gamma = {:.4}, h_gamma = {:.4}, delta' = {:.5}",
        cert.gamma, cert.h_gamma, cert.delta_min
    );

    let batch = run_batch(&prep, 500, 3, BatchOptions::default())?;
    let s = &batch.summary;
    println!(
        "p_hat = {:.3} over {} trials, certified {:.3}; uncertified solves {}, infeasible {}",
        s.p_safe_hat, s.trials, s.p_safe_theory, s.uncertified_steps, s.infeasible_steps
    );
    Ok(())
}
