//! Precomputed Kalman predictor schedule for the half-plane double
//! integrator, and the predictor run over a few noisy steps.
//!
//!     cargo run --example kalman_schedule

use kalman_cbf::kalman::{build_filter_schedule, predictor_update};
use kalman_cbf::linalg::{max_sym_eigenvalue, psd_sqrt};
use kalman_cbf::rng::{Channel, NoiseStream};
use kalman_cbf::system::LinearSystem;
use nalgebra::{dmatrix, dvector};

fn main() -> kalman_cbf::Result<()> {
    let q = dmatrix![7.66e-5, 3.06e-3; 3.06e-3, 1.23e-1];
    let sys = LinearSystem::new(
        dmatrix![1.0, 0.05; 0.0, 1.0],
        dmatrix![0.0125; 0.05],
        dmatrix![0.0, 1.0],
        q.clone(),
        dmatrix![0.09],
    )?;
    let horizon = 100;
    let sched = build_filter_schedule(&sys, &q, horizon)?;

    println!(" k   lambda_max(P_k)   K_k");
    for k in [0, 1, 2, 5, 10, 50, 100] {
        let p = sched.covariance(k);
        let lmax = max_sym_eigenvalue(p);
        let gain = if k < horizon {
            let g = sched.gain(k);
            format!("({:.4}, {:.4})", g[(0, 0)], g[(1, 0)])
        } else {
            "-".into()
        };
        println!("{k:>3}   {lmax:>14.6}   {gain}");
    }

    let p_end = sched.covariance(horizon);
    println!(
        "P_T = [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
        p_end[(0, 0)],
        p_end[(0, 1)],
        p_end[(1, 0)],
        p_end[(1, 1)]
    );

    let noise = NoiseStream::new(3);
    let (lq, lr) = (psd_sqrt(&q), psd_sqrt(sys.r(0)?));
    let mut x = dvector![7.0, 0.0];
    let mut xhat = x.clone();
    let u = dvector![-1.0];
    for k in 0..5 {
        let w = &lq * noise.standard_normals(k as u64, Channel::Process, 2);
        let v = &lr * noise.standard_normals(k as u64, Channel::Measurement, 1);
        let y = sys.measure(k, &x, &v)?;
        xhat = predictor_update(&xhat, &u, &y, k, &sys, &sched)?;
        x = sys.dynamics_step(k, &x, &u, &w)?;
        println!(
            "k = {}: x = ({:+.3}, {:+.3})  xhat = ({:+.3}, {:+.3})",
            k + 1,
            x[0],
            x[1],
            xhat[0],
            xhat[1]
        );
    }
    Ok(())
}
