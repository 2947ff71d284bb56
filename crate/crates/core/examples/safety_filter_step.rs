//! One safety-filter solve per barrier class: the Jensen-corrected
//! constraint, the ceiling on c'_J and the resulting minimal modification.
//!
//!     cargo run --example safety_filter_step

use kalman_cbf::barrier::{Barrier, LevelSetSearch, ShiftedBarrier};
use kalman_cbf::filter::{
    compute_cj_max, compute_delta_prime, resolve_cj, solve_safe_input, CjSpec, FeedbackMode, SafetyParams,
};
use nalgebra::{dmatrix, dvector};

fn main() -> kalman_cbf::Result<()> {
    let a = dmatrix![1.0, 0.05; 0.0, 1.0];
    let b = dmatrix![0.0125; 0.05];
    let c = dmatrix![0.0, 1.0];
    let r = dmatrix![0.09];
    // a steady-state-like gain and covariance
    let gain = dmatrix![0.05; 0.45];
    let p = dmatrix![0.2, 0.02; 0.02, 0.05];

    let ellipse = Barrier::concave_quadratic(0.8, dmatrix![1.0 / 144.0, 0.0; 0.0, 1.0 / 16.0], dvector![0.0, 0.0])?;
    let sb = ShiftedBarrier::new(ellipse.clone(), 0.3, 0.1, &LevelSetSearch::default())?;
    let params = SafetyParams::new(0.52, CjSpec::Fraction(0.38), 0.1, FeedbackMode::OutputFeedback)?;

    let lambda = ellipse.hessian_bound()?;
    let cj_max = compute_cj_max(0.8, sb.h_gamma, params.alpha, lambda, &gain, &r, &c, &p)?;
    let cj = resolve_cj(&params, cj_max);
    let delta = compute_delta_prime(cj, lambda, &gain, &r, &c, &p);
    println!("h_gamma = {:.4}, lambda_max = {lambda:.4}", sb.h_gamma);
    println!("c_J^max = {cj_max:.5}, c'_J = {cj:.5}, delta' = {delta:.5}");

    for (xhat, u_nom) in [
        (dvector![5.0, 0.0], dvector![-3.0]),
        (dvector![10.0, 1.5], dvector![0.0]),
        (dvector![0.0, 0.0], dvector![1.0]),
    ] {
        let step = solve_safe_input(&sb, &params, cj, &a, &b, &xhat, &u_nom)?;
        println!(
            "xhat = ({:>5.2}, {:>5.2})  h_hat = {:>7.4}  u_nom = {:>5.2}  u* = {:>8.4}  slack = {:.2e}  feasible = {}  ({:.1} us)",
            xhat[0],
            xhat[1],
            sb.eval_h_hat(&xhat),
            u_nom[0],
            step.u_star[0],
            step.constraint_slack,
            step.feasible,
            step.solve_time.as_secs_f64() * 1e6
        );
    }

    // half-space: closed-form projection, no curvature correction
    let half = ShiftedBarrier::new(
        Barrier::half_space(dvector![0.4, 0.4], 1.0)?,
        0.5,
        0.1,
        &LevelSetSearch::default(),
    )?;
    let params = SafetyParams::new(0.7, CjSpec::Absolute(0.2), 0.1, FeedbackMode::OutputFeedback)?;
    let step = solve_safe_input(&half, &params, 0.2, &a, &b, &dvector![-1.0, -0.5], &dvector![-20.0])?;
    println!("half-space: u_nom = -20 -> u* = {:.4}", step.u_star[0]);
    Ok(())
}
