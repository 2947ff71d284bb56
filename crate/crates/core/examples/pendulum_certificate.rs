//! Certified safety probability over a grid of initial pendulum states,
//! output feedback (angle measured) next to full state feedback.
//!
//!     cargo run --release --example pendulum_certificate [trials]

use kalman_cbf::config::ScenarioConfig;
use kalman_cbf::montecarlo::{grid_initial_states, lattice_2d, BatchOptions, PreparedScenario};

fn main() -> kalman_cbf::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let edge = std::f64::consts::PI / 6.0;
    let cells = lattice_2d([-edge, -edge], [edge, edge], [7, 7]);

    for preset in ["pendulum_output", "pendulum_state"] {
        let cfg = ScenarioConfig::preset(preset)?;
        let prep = PreparedScenario::new(cfg.to_scenario()?)?;
        let cert = prep.certificate();
        println!(
            "{preset}: gamma = {:.4}, h_gamma = {:.4}, delta = {:.3e}, horizon {}",
            cert.gamma,
            cert.h_gamma,
            cert.delta_min,
            prep.scenario().horizon
        );
        let table = grid_initial_states(&prep, &cells, trials, 1, BatchOptions::default())?;
        // rows: initial angular velocity, columns: initial angle
        println!("  p_theory / p_hat (blank: vacuous)");
        for row in table.chunks(7).collect::<Vec<_>>().into_iter().rev() {
            let line: Vec<String> = row
                .iter()
                .map(|c| {
                    if c.vacuous {
                        "     .     ".to_string()
                    } else {
                        format!("{:.2}/{:.2}", c.p_theory, c.p_hat)
                    }
                })
                .collect();
            println!("  {}", line.join(" "));
        }
    }
    Ok(())
}
