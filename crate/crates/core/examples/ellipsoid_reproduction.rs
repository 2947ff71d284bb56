//! Ellipsoidal safe set around a double integrator pushed to x1 = -5 by an
//! LQR nominal controller: Monte Carlo safety rate against the certificate.
//!
//!     cargo run --release --example ellipsoid_reproduction [trials]

use kalman_cbf::config::ScenarioConfig;
use kalman_cbf::montecarlo::{run_batch, BatchOptions, PreparedScenario};

fn main() -> kalman_cbf::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    let cfg = ScenarioConfig::preset("ellipsoid")?;
    let prep = PreparedScenario::new(cfg.to_scenario()?)?;
    let cert = prep.certificate();
    println!(
        "alpha = {}, c'_J = {:.4} (k_J = 0.38 of {:.4}), delta' = {:.5}, gamma = {} ({})",
        cert.alpha,
        cert.cj[0],
        cert.cj_max[0],
        cert.delta_min,
        cert.gamma,
        if cert.gamma_calibrated { "calibrated" } else { "fixed" }
    );

    let batch = run_batch(&prep, trials, cfg.run_settings().master_seed, BatchOptions::default())?;
    let s = &batch.summary;
    println!(
        "safe in {}/{} trials: p_hat = {:.3}, 95% CI [{:.3}, {:.3}]",
        s.safe_count, s.trials, s.p_safe_hat, s.wilson_ci95[0], s.wilson_ci95[1]
    );
    println!(
        "certified lower bound {:.4}{}; mean min h {:.4}; mean solve {:.4} ms",
        s.p_safe_theory,
        if s.theory_vacuous { " (vacuous)" } else { "" },
        s.min_h_mean,
        s.solve_ms_mean
    );
    let first_exits: Vec<String> = s
        .exit_step_histogram
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .take(8)
        .map(|(k, n)| format!("{k}:{n}"))
        .collect();
    println!("first exit steps (step:count) {}", first_exits.join(" "));
    Ok(())
}
