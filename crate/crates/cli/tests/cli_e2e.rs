//! End-to-end tests of the `mfvolterra` binary: exit codes, emitted files,
//! determinism, and report shapes, all through the public CLI surface.

use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mfvolterra")
}

fn write_config(dir: &Path, body: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn minimal_config() -> Value {
    json!({
        "hurst": {"shape": "constant", "value": 0.75},
        "horizon": 1.0,
        "grid_points": 2,
        "n_paths": 1,
        "seed": 7
    })
}

#[test]
fn simulate_minimal_config_writes_all_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &minimal_config());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    for name in ["ensemble.csv", "ensemble.bin", "manifest.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["n_paths"], 1);
    assert_eq!(manifest["files"]["binary"], "ensemble.bin");
}

#[test]
fn constant_index_outside_the_open_interval_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut body = minimal_config();
    body["hurst"]["value"] = json!(0.4);
    let config = write_config(dir.path(), &body);
    let out = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("1/2") && err.contains("1"), "stderr: {err}");
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut body = minimal_config();
    body["grid_pointz"] = json!(64);
    let config = write_config(dir.path(), &body);
    let out = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn invalid_thread_cap_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &minimal_config());
    let out = Command::new(bin())
        .env("MFVOLTERRA_THREADS", "zero")
        .args(["simulate", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("MFVOLTERRA_THREADS"));
}

#[test]
fn same_config_twice_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let mut body = minimal_config();
    body["grid_points"] = json!(33);
    body["n_paths"] = json!(3);
    body["method"] = json!("volterra");
    body["n_sub"] = json!(64);
    let config = write_config(dir.path(), &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    for name in ["ensemble.bin", "ensemble.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn verify_covariance_suite_on_a_small_grid_passes() {
    let dir = TempDir::new().unwrap();
    let mut body = minimal_config();
    body["grid_points"] = json!(8);
    body["quadrature"] =
        json!({"abs_tol": 1e-8, "rel_tol": 1e-6, "max_subdivisions": 256});
    let config = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--suite",
        "covariance",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["suites"][0]["suite"], "covariance");
    assert!(stdout_of(&out).contains("[PASS] covariance"));
}

#[test]
fn underpowered_moment_suite_fails_as_insufficient_sample() {
    let dir = TempDir::new().unwrap();
    let mut body = minimal_config();
    body["grid_points"] = json!(16);
    body["n_paths"] = json!(10);
    let config = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--suite",
        "moments",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("insufficient sample"), "stdout: {}", stdout_of(&out));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("verify_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["all_pass"], false);
}

#[test]
fn unknown_suite_name_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &minimal_config());
    let out = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--suite",
        "covariances",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("covariance"), "stderr: {}", stderr_of(&out));
}

fn localtime_config() -> Value {
    json!({
        "hurst": {"shape": "sinusoidal", "mean": 0.75, "amplitude": 0.1,
                   "omega": 2.0, "phase": 0.0},
        "horizon": 1.0,
        "grid_points": 257,
        "n_paths": 1,
        "seed": 99
    })
}

/// Parse the density CSV (bin-edge header, then one `t, densities…` row per
/// checkpoint) and return the occupation mass of the final row.
fn final_mass(csv_path: &Path) -> (f64, f64) {
    let text = fs::read_to_string(csv_path).unwrap();
    let mut lines = text.lines();
    let edges: Vec<f64> =
        lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let width = edges[1] - edges[0];
    let last: Vec<f64> =
        lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    (last[0], last[1..].iter().sum::<f64>() * width)
}

#[test]
fn localtime_fresh_run_emits_density_and_weighted_fields() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &localtime_config());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "localtime",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let (last_checkpoint, mass) = final_mass(&out_dir.join("localtime.csv"));
    assert!((last_checkpoint - 1.0).abs() < 1e-12);
    assert!((mass - 1.0).abs() < 1e-9, "final occupation mass {mass} != horizon");
    let weighted = fs::read_to_string(out_dir.join("weighted_0.csv")).unwrap();
    assert!(weighted.starts_with("checkpoint,weighted_local_time"));
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(out_dir.join("localtime_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["weighted_files"][0], "weighted_0.csv");
}

#[test]
fn table_index_skips_weighted_output_with_a_warning() {
    let dir = TempDir::new().unwrap();
    let mut body = localtime_config();
    body["hurst"] = json!({"shape": "table", "times": [0.0, 0.5, 1.0],
                            "values": [0.6, 0.7, 0.65]});
    let config = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "localtime",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("no derivative"));
    assert!(out_dir.join("localtime.csv").exists());
    assert!(!out_dir.join("weighted_0.csv").exists());
}

#[test]
fn localtime_roundtrip_from_binary_matches_fresh_run() {
    let dir = TempDir::new().unwrap();
    let mut body = localtime_config();
    body["grid_points"] = json!(129);
    body["n_paths"] = json!(2);
    body["seed"] = json!(4242);
    let config = write_config(dir.path(), &body);
    let sim_dir = dir.path().join("sim");
    let out = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let ingest_dir = dir.path().join("ingest");
    let out = run(&[
        "localtime",
        "--config",
        config.to_str().unwrap(),
        "--out",
        ingest_dir.to_str().unwrap(),
        "--paths",
        sim_dir.join("ensemble.bin").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let fresh_dir = dir.path().join("fresh");
    let out = run(&[
        "localtime",
        "--config",
        config.to_str().unwrap(),
        "--out",
        fresh_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(
        fs::read(ingest_dir.join("localtime.csv")).unwrap(),
        fs::read(fresh_dir.join("localtime.csv")).unwrap(),
        "ingested and fresh density fields differ"
    );
}

#[test]
fn tanaka_command_reports_lattice_and_degenerate_case() {
    let dir = TempDir::new().unwrap();
    let body = json!({
        "hurst": {"shape": "constant", "value": 0.75},
        "horizon": 1.0,
        "grid_points": 64,
        "n_paths": 1500,
        "seed": 31337,
        "quadrature": {"abs_tol": 1e-8, "rel_tol": 1e-6, "max_subdivisions": 256}
    });
    let config = write_config(dir.path(), &body);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "tanaka",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("tanaka_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["suite"]["all_pass"], true);
    let det = report["deterministic"].as_array().unwrap();
    assert!(!det.is_empty());
    assert!(det.iter().any(|v| v["convention"] == "normalized"));
    assert!(det.iter().any(|v| v["convention"] == "unnormalized"));
    assert!(report["degenerate_case"].is_object());
}
