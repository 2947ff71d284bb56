//! Discrete LQR gains used as nominal controllers.
//!
//!     cargo run --example lqr_nominal

use kalman_cbf::lqr::{solve_dlqr, spectral_radius, NominalController};
use kalman_cbf::system::LinearSystem;
use nalgebra::{dmatrix, dvector, DMatrix};

fn main() -> kalman_cbf::Result<()> {
    // inverted pendulum linearized at the top, dt = 0.01
    let a = dmatrix![1.0, 0.01; 0.01, 1.0];
    let b = dmatrix![0.0; 0.01];
    println!("open loop spectral radius {:.5}", spectral_radius(&a));

    for (q, r) in [
        (dmatrix![12.0, 0.0; 0.0, 1.0], 0.2),
        (dmatrix![1.0, 0.0; 0.0, 1.0], 1.0),
    ] {
        let k = solve_dlqr(&a, &b, &q, &DMatrix::from_element(1, 1, r))?;
        let closed = &a - &b * &k;
        println!(
            "Q = diag({}, {}), R = {r}: K = [{:.4}, {:.4}], closed loop radius {:.5}",
            q[(0, 0)],
            q[(1, 1)],
            k[(0, 0)],
            k[(0, 1)],
            spectral_radius(&closed)
        );
    }

    // tracking a target through the scenario-level controller
    let sys = LinearSystem::new(
        dmatrix![1.0, 0.05; 0.0, 1.0],
        dmatrix![0.0125; 0.05],
        dmatrix![0.0, 1.0],
        DMatrix::zeros(2, 2),
        dmatrix![0.09],
    )?;
    let nominal = NominalController::Lqr {
        q: dmatrix![1.0, 0.0; 0.0, 0.5],
        r: dmatrix![0.1],
        target: dvector![-5.0, 0.0],
    };
    let ctrl = nominal.resolve(&sys)?;
    let mut x = dvector![5.0, 0.0];
    for _ in 0..200 {
        x = sys.a(0)? * &x + sys.b(0)? * ctrl.control(&x);
    }
    println!("double integrator driven to ({:.4}, {:.4}) after 200 steps", x[0], x[1]);
    Ok(())
}
