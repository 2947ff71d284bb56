//! Estimation margin γ (analytic and Monte Carlo) and the induced barrier
//! shift h_γ for half-space and ellipsoidal safe sets.
//!
//!     cargo run --example barrier_margins

use kalman_cbf::barrier::{compute_gamma, compute_gamma_montecarlo, compute_h_gamma, Barrier, LevelSetSearch};
use kalman_cbf::kalman::build_filter_schedule;
use kalman_cbf::system::LinearSystem;
use nalgebra::{dmatrix, dvector};

fn main() -> kalman_cbf::Result<()> {
    let q = dmatrix![0.03, 0.03; 0.03, 0.03];
    let sys = LinearSystem::new(
        dmatrix![1.0, 0.05; 0.0, 1.0],
        dmatrix![0.0125; 0.05],
        dmatrix![0.0, 1.0],
        q.clone(),
        dmatrix![0.09],
    )?;
    let horizon = 100;
    let sched = build_filter_schedule(&sys, &q, horizon)?;

    let search = LevelSetSearch::default();
    let half = Barrier::half_space(dvector![0.4, 0.4], 1.0)?;
    let ellipse = Barrier::concave_quadratic(0.8, dmatrix![1.0 / 144.0, 0.0; 0.0, 1.0 / 16.0], dvector![0.0, 0.0])?;

    println!("sigma   gamma(analytic)  gamma(mc)   h_gamma half-space   h_gamma ellipse");
    for sigma in [0.2, 0.1, 0.05, 0.01] {
        let analytic = compute_gamma(&sched, sigma, horizon)?;
        let mc = compute_gamma_montecarlo(&sys, &sched, sigma, horizon, 10_000, 7)?;
        println!(
            "{sigma:<6}  {analytic:>14.4}  {mc:>9.4}   {:>18.4}   {:>15.4}",
            compute_h_gamma(&half, mc, &search)?,
            compute_h_gamma(&ellipse, mc, &search)?,
        );
    }

    // for a half-space the shift is exactly γ‖a‖
    let gamma = 1.0;
    println!(
        "half-space, gamma = 1: h_gamma = {:.6} (|a| = {:.6})",
        compute_h_gamma(&half, gamma, &search)?,
        dvector![0.4, 0.4].norm()
    );
    Ok(())
}
