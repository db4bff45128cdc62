// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CONFIG: &str = r#"{"n": 3, "lambdas": [0, 0, 1], "t_f": 3.0, "slices": 30, "restarts": 2, "max_iter": 500, "seed": 7}"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_liethermal"));
    cmd.arg("--quiet").arg("--threads").arg("1");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn setup() -> (TempDir, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, CONFIG).unwrap();
    let solution = dir.path().join("solution.json");
    ok(&["optimize", "--config", p(&config), "--out", p(&solution)]);
    (dir, config, solution)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_seconds");
    v
}

#[test]
fn algebra_lists_every_element() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("algebra.json");
    ok(&["algebra", "--n", "3", "--out", p(&out)]);
    let doc = json(&out);
    assert_eq!(doc["dim"], 28);
    assert_eq!(doc["elements"].as_array().unwrap().len(), 28);
}

#[test]
fn optimize_converges_and_verifies() {
    let (dir, _, solution) = setup();
    let sol = json(&solution);
    assert_eq!(sol["converged"], true);
    assert!(sol["J"].as_f64().unwrap() <= 1e-10);

    for mode in ["operator", "gsbound", "propagation"] {
        let report = dir.path().join(format!("{mode}.json"));
        ok(&["verify", "--solution", p(&solution), "--mode", mode, "--out", p(&report)]);
        assert_eq!(json(&report)["mode"], mode);
    }
    let report = dir.path().join("state.json");
    ok(&["verify", "--solution", p(&solution), "--mode", "state", "--beta", "2", "--out", p(&report)]);
    assert!(json(&report)["state_infidelity"].as_f64().unwrap() < 1e-8);

    let report = dir.path().join("circuit.json");
    ok(&["verify", "--solution", p(&solution), "--mode", "circuit", "--beta", "2", "--out", p(&report)]);
    let r = json(&report);
    assert!(r["reduced_state_infidelity"].as_f64().unwrap() < 1e-10);
    let (ps, pred) = (r["success_probability"].as_f64().unwrap(), r["predicted_success_probability"].as_f64().unwrap());
    assert!((ps - pred).abs() < 1e-10);

    let curve = dir.path().join("curve.csv");
    ok(&["verify", "--solution", p(&solution), "--mode", "state", "--beta-grid", "0.1,3,4", "--out", p(&curve)]);
    let text = fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn sample_and_circuit() {
    let (dir, _, solution) = setup();
    let samples = dir.path().join("samples.csv");
    ok(&["sample", "--solution", p(&solution), "--beta", "1", "--count", "20", "--out", p(&samples)]);
    let text = fs::read_to_string(&samples).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "z_1,z_2,z_3,energy");
    assert_eq!(rows.len(), 21);

    let circuit = dir.path().join("circuit.json");
    ok(&["circuit", "--solution", p(&solution), "--beta", "1", "--out", p(&circuit)]);
    let c = json(&circuit);
    assert_eq!(c["n"], 3);
    let text_out = dir.path().join("circuit.txt");
    ok(&["circuit", "--solution", p(&solution), "--beta", "1", "--format", "text", "--out", p(&text_out)]);
    assert!(fs::read_to_string(&text_out).unwrap().contains("qubits 7;"));
}

#[test]
fn qsl_scan_writes_curve() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("qsl.csv");
    ok(&[
        "qsl", "--config", p(&config), "--tf-min", "0.5", "--tf-max", "3", "--steps", "3",
        "--discretization-factor", "10", "--out", p(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "g_times_tf,best_J,restarts_used");
    assert_eq!(rows.len(), 4);
}

#[test]
fn pipeline_writes_manifest() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, CONFIG).unwrap();
    let out = dir.path().join("run");
    ok(&["pipeline", "--config", p(&config), "--out-dir", p(&out)]);
    for f in ["algebra.json", "solution.json", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["basis_hash"], json(&out.join("solution.json"))["basis_hash"]);
}

#[test]
fn same_seed_same_solution() {
    let (dir, config, first) = setup();
    let second = dir.path().join("again.json");
    ok(&["optimize", "--config", p(&config), "--out", p(&second)]);
    assert_eq!(without_timing(json(&first)), without_timing(json(&second)));
}

#[test]
fn small_chain_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"n": 2, "lambdas": [0, 0, 1], "t_f": 1.0}"#).unwrap();
    let out = run(&["optimize", "--config", p(&config), "--out", p(&dir.path().join("s.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&["optimize", "--config", p(&dir.path().join("nope.json")), "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn foreign_basis_hash_is_refused() {
    let (dir, _, solution) = setup();
    let mut doc = json(&solution);
    doc["basis_hash"] = Value::String("0".repeat(64));
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = run(&["verify", "--solution", p(&tampered), "--mode", "operator", "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

#[test]
fn unconverged_run_exits_three_unless_best_effort() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    // Far below the speed limit: the target cannot be reached.
    fs::write(&config, r#"{"n": 3, "lambdas": [0, 0, 1], "t_f": 0.1, "slices": 6, "restarts": 1, "max_iter": 30}"#).unwrap();
    let out_path = dir.path().join("s.json");
    let out = run(&["optimize", "--config", p(&config), "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(3));
    ok(&["optimize", "--config", p(&config), "--out", p(&out_path), "--best-effort"]);
    assert_eq!(json(&out_path)["converged"], false);
}
