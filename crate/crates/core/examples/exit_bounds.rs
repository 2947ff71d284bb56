//! Finite-horizon exit-probability bounds: both branches, the clip at 1 and
//! the safety lower bound with the estimation-margin allowance σ.
//!
//!     cargo run --example exit_bounds

use kalman_cbf::bounds::{exit_bound, BoundInput};

fn main() -> kalman_cbf::Result<()> {
    let base = BoundInput {
        m_eff: 1.0,
        h0_eff: 0.9,
        alpha: 0.9,
        delta: 0.05,
        horizon: 0,
        sigma: 0.05,
    };
    println!("    K   delta=+0.05        delta=0            delta=-0.01");
    for horizon in [0, 1, 5, 10, 20, 50, 100, 200] {
        let row: Vec<String> = [0.05, 0.0, -0.01]
            .iter()
            .map(|&delta| {
                let r = exit_bound(&BoundInput { horizon, delta, ..base }).unwrap();
                format!("{:.4} ({:.4})", r.p_exit, r.p_safe_lower)
            })
            .collect();
        println!("{horizon:>5}   {}", row.join("   "));
    }
    println!("(exit bound, safety lower bound in parentheses)");

    // a vacuous certificate reports the raw value as well
    let r = exit_bound(&BoundInput {
        m_eff: 1.0,
        h0_eff: 0.5,
        alpha: 0.9,
        delta: -0.05,
        horizon: 10,
        sigma: 0.0,
    })?;
    println!(
        "raw {:.4} clipped {:.4} vacuous {} branch {:?}",
        r.p_exit_raw, r.p_exit, r.vacuous, r.branch
    );
    Ok(())
}
