//! Calibration sweep over the c'_J fraction k_J for the half-plane scenario.
//!
//!     cargo run --release --example halfplane_sweep [trials]

use kalman_cbf::config::ScenarioConfig;
use kalman_cbf::montecarlo::{sweep_params, BatchOptions, PreparedScenario};

fn main() -> kalman_cbf::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let cfg = ScenarioConfig::preset("halfplane")?;
    let prep = PreparedScenario::new(cfg.to_scenario()?)?;
    let points = cfg.sweep_points()?;
    let sweep = sweep_params(
        &prep,
        &points,
        trials,
        cfg.run_settings().master_seed,
        BatchOptions::default(),
    )?;

    println!("alpha   k_J     p_hat   95% CI            delta'");
    for p in &sweep {
        let s = &p.summary;
        let bar = "#".repeat((s.p_safe_hat * 40.0).round() as usize);
        println!(
            "{:<6}  {:<6}  {:.3}   [{:.3}, {:.3}]    {:+.4}  {bar}",
            p.alpha, p.k_j, s.p_safe_hat, s.wilson_ci95[0], s.wilson_ci95[1], p.certificate.delta_min
        );
    }
    Ok(())
}
