//! Command-line front end: `run`, `bound`, `sweep`, `grid`, `validate`.
//!
//! Artifacts (all in `--out`):
//! - `summary.json`: resolved scenario, certificate and Monte Carlo summary;
//! - `trials.csv`: `trial_id,seed,safe,min_h,exit_step,infeasible_steps,mean_solve_ms`;
//! - `traj.csv` with `--log-traj`: `trial,k,x1..xn,xh1..xhn,u1..um,h,h_hat`;
//! - `sweep.csv` / `grid.csv` for the respective commands.
//!
//! `mean_solve_ms` is left empty unless `--timing` is given, so that
//! `trials.csv` is a pure function of the scenario and seed.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunSettings, ScenarioConfig};
use crate::error::{Error, Result};
use crate::montecarlo::{
    grid_initial_states, run_batch, sweep_params, BatchOptions, PreparedScenario, Trajectory, TrialResult,
};
use crate::rng::RNG_DESCRIPTION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const TRIALS_HEADER: &str = "trial_id,seed,safe,min_h,exit_step,infeasible_steps,mean_solve_ms";
pub const GRID_HEADER: &str = "x0_1,x0_2,p_hat,p_theory,vacuous";
pub const SWEEP_HEADER: &str =
    "alpha,k_J,trials,safe_count,p_safe_hat,ci_lo,ci_hi,p_safe_theory,theory_vacuous,gamma,h_gamma,delta_min,infeasible_steps";

#[derive(Debug, Parser)]
#[command(
    name = "kalman-cbf",
    version,
    about = "Kalman-filter safety filters with certified finite-horizon safety bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo closed-loop run: summary.json, trials.csv (+ traj.csv).
    Run(CommonArgs),
    /// Certificate only, no simulation: summary.json.
    Bound(CommonArgs),
    /// One batch per (alpha, k_J) point of the [sweep] section: sweep.csv.
    Sweep(CommonArgs),
    /// One batch per initial state of the [grid] section: grid.csv.
    Grid(CommonArgs),
    /// Parse and check a scenario.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML). Exclusive with --preset.
    pub config: Option<PathBuf>,
    /// Built-in scenario: halfplane, ellipsoid, pendulum_output, pendulum_state.
    #[arg(long)]
    pub preset: Option<String>,
    /// Dotted-path override, e.g. --set safety.k_J=0.38 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Trials (per grid point for sweep and grid).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write traj.csv.
    #[arg(long)]
    pub log_traj: bool,
    /// Fill the wall-clock mean_solve_ms column of trials.csv.
    #[arg(long)]
    pub timing: bool,
}

/// Parses `args` (including the program name), executes, and returns the
/// process exit code. Errors are reported on standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERIC
            }
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn load_config(args: &CommonArgs) -> Result<ScenarioConfig> {
    let text = match (&args.config, &args.preset) {
        (Some(path), None) => {
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?
        }
        (None, Some(name)) => crate::config::preset_text(name)?.to_string(),
        (Some(_), Some(_)) => return Err(Error::Config("give either a config file or --preset, not both".into())),
        (None, None) => return Err(Error::Config("no scenario: pass a config file or --preset NAME".into())),
    };
    ScenarioConfig::from_toml_str_with_overrides(&text, &args.overrides)
}

struct Loaded {
    config: ScenarioConfig,
    prepared: PreparedScenario,
    settings: RunSettings,
}

fn load(args: &CommonArgs) -> Result<Loaded> {
    let config = load_config(args)?;
    let mut settings = config.run_settings();
    if let Some(t) = args.trials {
        settings.trials = t;
    }
    if let Some(s) = args.seed {
        settings.master_seed = s;
    }
    settings.log_trajectories |= args.log_traj;
    if settings.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    if args.workers == Some(0) {
        return Err(Error::Config("workers must be positive".into()));
    }
    let prepared = PreparedScenario::new(config.to_scenario()?)?;
    Ok(Loaded {
        config,
        prepared,
        settings,
    })
}

fn options(args: &CommonArgs, settings: &RunSettings) -> BatchOptions {
    BatchOptions {
        workers: args.workers,
        log_trajectories: settings.log_trajectories,
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn resolved_parameters(
    loaded: &Loaded,
    command: &str,
    elapsed_s: Option<f64>,
    workers: Option<usize>,
) -> Result<serde_json::Value> {
    let scn = loaded.prepared.scenario();
    let mut resolved = ScenarioConfig::from_scenario(scn, &loaded.settings)?;
    resolved.meta = loaded.config.meta.clone();
    resolved.sweep = loaded.config.sweep.clone();
    resolved.grid = loaded.config.grid.clone();
    Ok(json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "scenario_name": loaded.config.name(),
        "scenario": resolved,
        "horizon": scn.horizon,
        "trials": loaded.settings.trials,
        "master_seed": loaded.settings.master_seed,
        "workers": workers,
        "rng": RNG_DESCRIPTION,
        "elapsed_s": elapsed_s,
    }))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("cannot encode {name}: {e}")))?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join(name))
        .map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numeric(format!("csv: {other:?}")),
    }
}

fn write_header(w: &mut csv::Writer<fs::File>, header: &str) -> Result<()> {
    w.write_record(header.split(',')).map_err(csv_error)
}

pub fn write_trials_csv(dir: &Path, trials: &[TrialResult], timing: bool) -> Result<()> {
    let mut w = csv_writer(dir, "trials.csv")?;
    write_header(&mut w, TRIALS_HEADER)?;
    for (i, t) in trials.iter().enumerate() {
        w.write_record([
            i.to_string(),
            t.seed.to_string(),
            t.safe.to_string(),
            fmt_f64(t.min_h),
            t.exit_step.map(|k| k.to_string()).unwrap_or_default(),
            t.infeasible_steps.to_string(),
            if timing {
                fmt_f64(t.mean_solve_time.as_secs_f64() * 1e3)
            } else {
                String::new()
            },
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traj_csv(dir: &Path, trajectories: &[Trajectory], n: usize, m: usize) -> Result<()> {
    let mut w = csv_writer(dir, "traj.csv")?;
    let mut header = vec!["trial".to_string(), "k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xh{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend(["h".to_string(), "h_hat".to_string()]);
    w.write_record(&header).map_err(csv_error)?;
    for (trial, traj) in trajectories.iter().enumerate() {
        for step in traj {
            let mut row = vec![trial.to_string(), step.k.to_string()];
            row.extend(step.x.iter().map(|&v| fmt_f64(v)));
            row.extend(step.xhat.iter().map(|&v| fmt_f64(v)));
            match &step.u {
                Some(u) => row.extend(u.iter().map(|&v| fmt_f64(v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            row.push(fmt_f64(step.h));
            row.push(fmt_f64(step.h_hat));
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &CommonArgs) -> Result<()> {
    let loaded = load(args)?;
    fs::create_dir_all(&args.out)?;
    let started = Instant::now();
    let batch = run_batch(
        &loaded.prepared,
        loaded.settings.trials,
        loaded.settings.master_seed,
        options(args, &loaded.settings),
    )?;
    let elapsed = started.elapsed().as_secs_f64();
    let scn = loaded.prepared.scenario();
    write_trials_csv(&args.out, &batch.trials, args.timing)?;
    if loaded.settings.log_trajectories {
        write_traj_csv(&args.out, &batch.trajectories, scn.sys.state_dim(), scn.sys.input_dim())?;
    }
    let mut doc = resolved_parameters(&loaded, "run", Some(elapsed), args.workers)?;
    doc["certificate"] = json!(loaded.prepared.certificate());
    doc["summary"] = json!(batch.summary);
    write_json(&args.out, "summary.json", &doc)?;
    let s = &batch.summary;
    println!(
        "p_safe_hat = {:.4} [{:.4}, {:.4}] over {} trials; certified lower bound {:.4}{}",
        s.p_safe_hat,
        s.wilson_ci95[0],
        s.wilson_ci95[1],
        s.trials,
        s.p_safe_theory,
        if s.theory_vacuous { " (vacuous)" } else { "" }
    );
    Ok(())
}

fn cmd_bound(args: &CommonArgs) -> Result<()> {
    let loaded = load(args)?;
    fs::create_dir_all(&args.out)?;
    let cert = loaded.prepared.certificate();
    let mut doc = resolved_parameters(&loaded, "bound", None, None)?;
    doc["certificate"] = json!(cert);
    doc["p_safe_lower"] = json!(cert.bound.p_safe_lower);
    write_json(&args.out, "summary.json", &doc)?;
    println!(
        "gamma = {:.6}, h_gamma = {:.6}, delta' = {:.6}, p_safe >= {:.6}{}",
        cert.gamma,
        cert.h_gamma,
        cert.delta_min,
        cert.bound.p_safe_lower,
        if cert.bound.vacuous { " (vacuous)" } else { "" }
    );
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<()> {
    let mut loaded = load(args)?;
    if args.trials.is_none() {
        if let Some(t) = loaded.config.sweep.as_ref().and_then(|s| s.trials) {
            loaded.settings.trials = t;
        }
    }
    let grid = loaded.config.sweep_points()?;
    fs::create_dir_all(&args.out)?;
    let started = Instant::now();
    let points = sweep_params(
        &loaded.prepared,
        &grid,
        loaded.settings.trials,
        loaded.settings.master_seed,
        options(args, &loaded.settings),
    )?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut w = csv_writer(&args.out, "sweep.csv")?;
    write_header(&mut w, SWEEP_HEADER)?;
    for p in &points {
        let s = &p.summary;
        let c = &p.certificate;
        w.write_record([
            fmt_f64(p.alpha),
            fmt_f64(p.k_j),
            s.trials.to_string(),
            s.safe_count.to_string(),
            fmt_f64(s.p_safe_hat),
            fmt_f64(s.wilson_ci95[0]),
            fmt_f64(s.wilson_ci95[1]),
            fmt_f64(s.p_safe_theory),
            s.theory_vacuous.to_string(),
            fmt_f64(c.gamma),
            fmt_f64(c.h_gamma),
            fmt_f64(c.delta_min),
            s.infeasible_steps.to_string(),
        ])
        .map_err(csv_error)?;
        println!(
            "alpha = {:<6} k_J = {:<6} p_safe_hat = {:.4} [{:.4}, {:.4}]",
            p.alpha, p.k_j, s.p_safe_hat, s.wilson_ci95[0], s.wilson_ci95[1]
        );
    }
    w.flush()?;
    let mut doc = resolved_parameters(&loaded, "sweep", Some(elapsed), args.workers)?;
    doc["points"] = json!(points);
    write_json(&args.out, "summary.json", &doc)?;
    Ok(())
}

fn cmd_grid(args: &CommonArgs) -> Result<()> {
    let mut loaded = load(args)?;
    if args.trials.is_none() {
        if let Some(t) = loaded.config.grid.as_ref().and_then(|g| g.trials) {
            loaded.settings.trials = t;
        }
    }
    let cells = loaded.config.grid_cells()?;
    fs::create_dir_all(&args.out)?;
    let started = Instant::now();
    let table = grid_initial_states(
        &loaded.prepared,
        &cells,
        loaded.settings.trials,
        loaded.settings.master_seed,
        options(args, &loaded.settings),
    )?;
    let elapsed = started.elapsed().as_secs_f64();
    let mut w = csv_writer(&args.out, "grid.csv")?;
    write_header(&mut w, GRID_HEADER)?;
    for cell in &table {
        w.write_record([
            fmt_f64(cell.x0[0]),
            fmt_f64(cell.x0[1]),
            fmt_f64(cell.p_hat),
            fmt_f64(cell.p_theory),
            cell.vacuous.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    let informative: Vec<_> = table.iter().filter(|c| !c.vacuous).collect();
    let consistent = informative
        .iter()
        .filter(|c| {
            let n = c.summary.trials as f64;
            c.p_hat >= c.p_theory - 3.0 * (c.p_hat * (1.0 - c.p_hat) / n).sqrt()
        })
        .count();
    let mut doc = resolved_parameters(&loaded, "grid", Some(elapsed), args.workers)?;
    doc["cells"] = json!(table);
    doc["non_vacuous_cells"] = json!(informative.len());
    doc["consistent_cells"] = json!(consistent);
    write_json(&args.out, "summary.json", &doc)?;
    println!(
        "{} cells, {} non-vacuous, empirical >= certified (3-sigma) in {}",
        table.len(),
        informative.len(),
        consistent
    );
    Ok(())
}

fn cmd_validate(args: &CommonArgs) -> Result<()> {
    let loaded = load(args)?;
    let scn = loaded.prepared.scenario();
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "ok: {} (n = {}, m = {}, p = {}, T = {})",
        loaded.config.name().unwrap_or("scenario"),
        scn.sys.state_dim(),
        scn.sys.input_dim(),
        scn.sys.output_dim(),
        scn.horizon
    )?;
    Ok(())
}
