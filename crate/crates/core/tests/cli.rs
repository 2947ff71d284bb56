use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kalman_cbf::cli::{GRID_HEADER, SWEEP_HEADER, TRIALS_HEADER};

fn kalman_cbf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kalman-cbf"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = kalman_cbf(args, out);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn trials_csv_is_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        ("a", vec!["--workers", "1"]),
        ("b", vec!["--workers", "1"]),
        ("c", vec!["--workers", "4"]),
        ("d", vec![]),
    ];
    let mut files = Vec::new();
    for (name, extra) in &runs {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--preset", "ellipsoid", "--trials", "100", "--seed", "42"];
        args.extend(extra.iter().copied());
        ok(&args, &out);
        files.push(fs::read(out.join("trials.csv")).unwrap());
    }
    assert!(files.windows(2).all(|w| w[0] == w[1]));

    let text = String::from_utf8(files[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRIALS_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 100);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], i.to_string());
        assert!(row[2] == "true" || row[2] == "false");
        assert_eq!(row[2] == "true", row[4].is_empty());
        row[3].parse::<f64>().unwrap();
        assert!(row[6].is_empty());
    }

    let s = summary(&dir.path().join("a"));
    assert_eq!(s["command"], "run");
    assert_eq!(s["master_seed"], 42);
    assert_eq!(s["trials"], 100);
    assert_eq!(s["summary"]["trials"], 100);
    assert!(s["rng"].as_str().unwrap().contains("chacha8"));
    assert_eq!(s["scenario"]["safety"]["alpha"], 0.52);
    assert!(s["certificate"]["bound"]["p_safe_lower"].is_number());
}

#[test]
fn different_seed_changes_trials() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["run", "--preset", "ellipsoid", "--trials", "20", "--seed", "1"],
        &dir.path().join("a"),
    );
    ok(
        &["run", "--preset", "ellipsoid", "--trials", "20", "--seed", "2"],
        &dir.path().join("b"),
    );
    let a = fs::read(dir.path().join("a/trials.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trials.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn timing_fills_solve_column() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["run", "--preset", "halfplane", "--trials", "5", "--timing"],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    for line in text.lines().skip(1) {
        line.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    }
}

#[test]
fn trajectory_log_schema() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "run",
            "--preset",
            "halfplane",
            "--trials",
            "3",
            "--log-traj",
            "--set",
            "run.T=10",
        ],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,k,x1,x2,xh1,xh2,u1,h,h_hat"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 11);
    for row in &rows {
        assert_eq!(row.len(), 9);
        let terminal = row[1] == "10";
        assert_eq!(row[6].is_empty(), terminal);
        // h = 0.4 x1 + 0.4 x2 + 1
        let x1: f64 = row[2].parse().unwrap();
        let x2: f64 = row[3].parse().unwrap();
        let h: f64 = row[7].parse().unwrap();
        assert!((h - (0.4 * x1 + 0.4 * x2 + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn bound_reports_lower_bound_without_simulating() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["bound", "--preset", "pendulum_output"], dir.path());
    assert!(!dir.path().join("trials.csv").exists());
    let s = summary(dir.path());
    let p = s["p_safe_lower"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
    assert_eq!(s["certificate"]["bound"]["p_safe_lower"].as_f64().unwrap(), p);
    assert_eq!(s["certificate"]["gamma_mode"], "montecarlo");
    assert_eq!(s["certificate"]["delta"].as_array().unwrap().len(), 20);
}

#[test]
fn sweep_and_grid_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    ok(
        &[
            "sweep",
            "--preset",
            "ellipsoid",
            "--trials",
            "10",
            "--set",
            "sweep.points=[[0.5, 0.3], [0.6, 0.4]]",
        ],
        &sweep,
    );
    let text = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.5,0.3,10,"));
    assert_eq!(summary(&sweep)["points"].as_array().unwrap().len(), 2);

    let grid = dir.path().join("grid");
    ok(
        &[
            "grid",
            "--preset",
            "pendulum_state",
            "--trials",
            "10",
            "--set",
            "grid.counts=[3, 2]",
        ],
        &grid,
    );
    let text = fs::read_to_string(grid.join("grid.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(GRID_HEADER));
    assert_eq!(lines.count(), 6);
    let s = summary(&grid);
    assert_eq!(s["cells"].as_array().unwrap().len(), 6);
    assert!(s["consistent_cells"].as_u64().unwrap() <= s["non_vacuous_cells"].as_u64().unwrap());
}

#[test]
fn config_file_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["run", "--preset", "halfplane", "--trials", "4", "--seed", "9"],
        &dir.path().join("a"),
    );
    // the resolved scenario in summary.json, written back as TOML, reproduces the run
    let resolved = &summary(&dir.path().join("a"))["scenario"];
    let toml_text = toml::to_string(&toml::Value::try_from(resolved).unwrap()).unwrap();
    let path = dir.path().join("resolved.toml");
    fs::write(&path, toml_text).unwrap();
    ok(
        &["run", path.to_str().unwrap(), "--trials", "4", "--seed", "9"],
        &dir.path().join("b"),
    );
    assert_eq!(
        fs::read(dir.path().join("a/trials.csv")).unwrap(),
        fs::read(dir.path().join("b/trials.csv")).unwrap()
    );

    let o = ok(&["validate", path.to_str().unwrap()], dir.path());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok: halfplane (n = 2, m = 1, p = 1, T = 100)"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| kalman_cbf(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["validate", "--preset", "ellipsoid"]), 0);
    assert_eq!(code(&["validate", "--preset", "nope"]), 2);
    assert_eq!(code(&["validate"]), 2);
    assert_eq!(code(&["run", "--preset", "ellipsoid", "--set", "safety.alpha=1.5"]), 2);
    assert_eq!(code(&["run", "--preset", "ellipsoid", "--set", "safety.bogus=1"]), 2);
    assert_eq!(code(&["run", "--preset", "ellipsoid", "--trials", "0"]), 2);
    assert_eq!(code(&["validate", "/nonexistent/scenario.toml"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    // uncontrollable pair: the LQR synthesis cannot converge
    assert_eq!(
        code(&["validate", "--preset", "ellipsoid", "--set", "system.B=[[0.0], [0.0]]"]),
        3
    );
}
