//! The experiment runner and the `km-lab` binary end to end.

use std::fs;
use std::path::Path;
use std::process::Command;

use km_lab::experiment::{run_experiment, CheckStatus, ExperimentConfig, OutputConfig};

const BIN: &str = env!("CARGO_BIN_EXE_km-lab");

fn config_path(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn small(name: &str, n_max: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(Path::new(&config_path(name))).unwrap();
    cfg.n_max = n_max;
    cfg
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = small("ikm_rotation.json", 800);
        cfg.output = Some(OutputConfig {
            dir: dir.path().to_path_buf(),
            prefix: "det".into(),
        });
        run_experiment(&cfg).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3 * 3 + 1);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        if name.to_string_lossy().ends_with("_meta.json") {
            // The metadata echoes the config, which names its own output directory.
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v["config"].as_object_mut().unwrap().remove("output");
                v
            };
            assert_eq!(strip(&x), strip(&y), "{name:?}");
        } else {
            assert_eq!(x, y, "{name:?}");
        }
    }
}

#[test]
fn every_requested_bound_is_reported_once() {
    let mut cfg = small("ikm_rotation.json", 300);
    cfg.bounds = ["main", "exact", "rate_summable", "rate_weighted", "rate_tau", "ishikawa", "diagonal", "projected"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let out = run_experiment(&cfg).unwrap();
    for run in &out.runs {
        let names: Vec<&str> = run.report.checks.iter().map(|c| c.bound.as_str()).collect();
        assert_eq!(names, ["main", "exact", "rate_summable", "rate_weighted", "rate_tau", "ishikawa", "diagonal", "projected"]);
        let status = |b: &str| run.report.checks.iter().find(|c| c.bound == b).unwrap().status;
        assert_eq!(status("main"), CheckStatus::Pass);
        assert_eq!(status("rate_weighted"), CheckStatus::Pass);
        for na in ["exact", "rate_tau", "ishikawa", "diagonal", "projected"] {
            assert_eq!(status(na), CheckStatus::NotApplicable, "{na}");
        }
    }
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ball.json");
    fs::write(
        &cfg,
        r#"{"engine": "km", "operator": {"id": "projection", "set": {"kind": "ball", "center": [0, 0], "radius": 1}},
            "x0": [3, -1], "schedule": "const:0.5", "n_max": 5000, "bounds": ["exact", "main"]}"#,
    )
    .unwrap();
    let out = Command::new(BIN)
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("[PASS] exact"));
    assert!(stdout.contains("overall PASS"));
    for f in ["run_seed0_trace.csv", "run_seed0_bounds.csv", "run_seed0_meta.json", "run_report.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let fit = Command::new(BIN)
        .args(["fit"])
        .arg(dir.path().join("run_seed0_bounds.csv"))
        .args(["--col", "bound_exact", "--window", "500:5000"])
        .output()
        .unwrap();
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert!((v["slope"].as_f64().unwrap() + 0.5).abs() < 0.05);
}

#[test]
fn divergent_witness_is_reported_but_dominated() {
    let out = Command::new(BIN).args(["run", &config_path("divergent_identity.json")]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("NONCONVERGENCE"));
    assert!(stdout.contains("[PASS] main"));
}

#[test]
fn failing_checks_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    // κ far below the anchor radius with no H0 flag: the exact bound cannot hold.
    fs::write(
        &cfg,
        r#"{"engine": "km", "operator": {"id": "rotation", "angle": 3.0}, "x0": [10, 0],
            "schedule": "const:0.5", "n_max": 50, "kappa": 1e-3, "bounds": ["exact"]}"#,
    )
    .unwrap();
    let out = Command::new(BIN).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "flagged runs report NA");
    assert!(String::from_utf8_lossy(&out.stdout).contains("[NA] exact"));

    fs::write(&cfg, "{ not json").unwrap();
    let out = Command::new(BIN).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn markov_subcommands_print_json() {
    let dp = Command::new(BIN)
        .args(["markov", "dp", "--schedule", "const:0.5", "--eps", "power:K=1,a=2", "--n", "50", "--m", "3", "--at", "9"])
        .output()
        .unwrap();
    assert!(dp.status.success());
    let v: serde_json::Value = serde_json::from_slice(&dp.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["w"]["value"].as_f64().unwrap() > 0.0);

    let sim = Command::new(BIN)
        .args(["markov", "simulate", "--schedule", "const:0.3", "--eps", "power:K=1,a=1", "--m", "5", "--n", "20"])
        .args(["--trials", "50000", "--seed", "3"])
        .output()
        .unwrap();
    assert!(sim.status.success());
    let v: serde_json::Value = serde_json::from_slice(&sim.stdout).unwrap();
    assert!(v["z"].as_f64().unwrap() <= 4.0);

    let ballot = Command::new(BIN)
        .args(["markov", "ballot", "--schedule", "const:0.7", "--i", "10", "--n", "40", "--trials", "50000"])
        .output()
        .unwrap();
    assert!(ballot.status.success());
    let v: serde_json::Value = serde_json::from_slice(&ballot.stdout).unwrap();
    assert!(v["p_hat"].as_f64().unwrap() <= v["bound"].as_f64().unwrap() + 4.0 * v["std_err"].as_f64().unwrap());
}

#[test]
fn evolve_and_certify_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("evolve.json");
    fs::write(
        &cfg,
        r#"{"operator": {"id": "rotation", "angle": 1.0}, "x0": [1, 1],
            "forcing": {"kind": "power_law", "k": 0.3, "a": 2, "direction": [1, 0]},
            "t_end": 10, "dt": 0.01}"#,
    )
    .unwrap();
    let out = Command::new(BIN).arg("evolve").arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let grid = dir.path().join("grid.json");
    fs::write(
        &grid,
        r#"{"operators": [{"name": "rot", "operator": {"id": "rotation", "angle": 1.0}, "x0": [1, 0]}],
            "schedules": ["const:0.5"], "errors": [{"eps": "power:K=0.5,a=2"}], "n_max": 400}"#,
    )
    .unwrap();
    let json = dir.path().join("report.json");
    let out = Command::new(BIN)
        .env("KM_LAB_WORKERS", "1")
        .arg("certify")
        .arg(&grid)
        .arg("--json")
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
}
