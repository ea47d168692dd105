#![allow(clippy::approx_constant)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn roelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roelab"))
        .args(args)
        .env_remove("ROELAB_THREADS")
        .output()
        .expect("binary runs")
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn hadamard_extract_scenario() {
    let out = roelab(&["run", fixture("hadamard/extract.json").to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json_of(&out);
    let delta = rep["result"]["delta_actual"].as_f64().unwrap();
    assert!((delta - 0.70711).abs() < 5e-6);
    assert_eq!(rep["result"]["extraction"]["radius"].as_f64(), Some(0.0));
    assert_eq!(rep["passed"], Value::Bool(true));
}

#[test]
fn hadamard_witness_scenario() {
    let out = roelab(&["run", fixture("hadamard/witness.json").to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let w = &json_of(&out)["result"]["witnesses"][0];
    assert!((w["certificate"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((w["bound"].as_f64().unwrap() - 0.35355).abs() < 5e-6);
}

#[test]
fn extract_from_flags_matches_scenario() {
    let space = fixture("hadamard/space.json");
    let unitary = fixture("hadamard/unitary.json");
    let out = roelab(&[
        "extract",
        "--space",
        space.to_str().unwrap(),
        "--unitary",
        unitary.to_str().unwrap(),
        "--delta",
        "0.5",
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["result"]["extraction"]["g"], serde_json::json!([0, 0]));
}

#[test]
fn malformed_space_exits_2_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("space.json");
    std::fs::write(&bad, r#"{"n": 2, "dist": [[0, 1], [2, 0]]}"#).unwrap();
    let out = roelab(&["ql", "--space", bad.to_str().unwrap(), "--unitary", "identity", "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    let err = json_of(&out);
    assert_eq!(err["error"]["kind"], "format");
    let out = roelab(&["cover", "--space", "path:0", "--map", "identity"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "invalid_argument");
}

#[test]
fn cover_then_outer_through_binary_file() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("w.bin");
    let report = dir.path().join("cover.json");
    let out = roelab(&[
        "cover",
        "--space",
        "path:9",
        "--map",
        "reflection",
        "--fibers",
        "2",
        "--save-unitary",
        bin.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("cover.timings.json").exists());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["result"]["plan"]["support_radius"].as_f64(), Some(0.0));

    let out = roelab(&["outer", "--space", "path:9", "--unitary", bin.to_str().unwrap(), "--delta", "0.5", "--radius-grid", "0,1,2", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = json_of(&out);
    assert_eq!(rep["result"]["outer"]["propagation_uw"].as_f64(), Some(0.0));
    assert_eq!(rep["result"]["outer"]["extraction"]["f"], serde_json::json!([8, 7, 6, 5, 4, 3, 2, 1, 0]));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("sweep_collapse.json");
    let mut reports = Vec::new();
    for threads in ["1", "8"] {
        let out_path = dir.path().join(format!("sweep{threads}.json"));
        let out = Command::new(env!("CARGO_BIN_EXE_roelab"))
            .args(["run", scenario.to_str().unwrap(), "--out", out_path.to_str().unwrap(), "--quiet"])
            .env("ROELAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(dir.path().join(format!("sweep{threads}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 11);
        reports.push((std::fs::read(&out_path).unwrap(), csv));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn ql_reports_zero_violation_for_banded_operator() {
    let out = roelab(&["ql", "--space", "path:8", "--map", "identity", "--fibers", "2", "--unitary", "cover-noise", "--propagation", "1", "--seed", "4", "--radius-grid", "1,3", "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let rep = json_of(&out);
    for r in rep["result"]["reports"].as_array().unwrap() {
        assert_eq!(r["violation_upper"].as_f64(), Some(0.0));
    }
}
