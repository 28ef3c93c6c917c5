use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ssid_cls::estimators::build_regression;
use ssid_cls::harness::{self, MethodSpec};
use ssid_cls::simulator::scenarios;

fn ssid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssid-cls"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = ssid(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rmse_column(path: &Path) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[1].parse().unwrap())
        .collect()
}

#[test]
fn file_pipeline_reproduces_in_process_result() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("cls.json");
    let scores = dir.path().join("rmse.csv");
    ok(&[
        "simulate",
        "--scenario",
        "compartmental-ti",
        "--seed",
        "77",
        "--out",
        p(&data),
    ]);
    ok(&[
        "identify",
        "--method",
        "cls",
        "--data",
        p(&data),
        "--out",
        p(&est),
    ]);
    let scenario_file = data.join("scenario.json");
    ok(&[
        "validate",
        "--estimate",
        p(&est),
        "--scenario",
        p(&scenario_file),
        "--out",
        p(&scores),
    ]);

    let sc = scenarios::compartmental_ti();
    let traj = sc.identification_data(77).unwrap();
    let found = harness::identify(
        &sc,
        &MethodSpec::new(ssid_cls::estimators::Method::Cls),
        &build_regression(&traj).unwrap(),
        sc.seed,
        &[],
    )
    .unwrap();
    let (expected, _) = harness::validate(&sc, &found.estimate, 0).unwrap();
    let got = rmse_column(&scores);
    assert_eq!(got.len(), 3);
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g.to_bits(), e.to_bits());
    }

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&est).unwrap()).unwrap();
    let a_hat = json["A_hat"].as_array().unwrap();
    assert_eq!(a_hat.len(), 3);
    assert!(a_hat.iter().all(|row| row.as_array().unwrap().len() == 3));
    assert!(json["B_hat"].is_null());
    assert_eq!(json["method"], "cls");
    assert!(json["constraint_residual"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn recursive_identify_uses_lambda_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let est = dir.path().join("rwcls.json");
    ok(&[
        "simulate",
        "--scenario",
        "compartmental-tv",
        "--out",
        p(&data),
    ]);
    assert!(data.join("validation_mode3.csv").exists());
    ok(&[
        "identify",
        "--method",
        "rwcls",
        "--lambda",
        "0.9",
        "--data",
        p(&data.join("identification.csv")),
        "--out",
        p(&est),
    ]);
    let scores = dir.path().join("rmse.csv");
    ok(&[
        "validate",
        "--estimate",
        p(&est),
        "--scenario",
        "compartmental-tv",
        "--mode",
        "3",
        "--out",
        p(&scores),
    ]);
    assert_eq!(rmse_column(&scores).len(), 3);
}

#[test]
fn montecarlo_writes_summary_with_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc");
    ok(&[
        "montecarlo",
        "--scenario",
        "compartmental-ti",
        "--runs",
        "1",
        "--methods",
        "ls,cls",
        "--base-seed",
        "3",
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,state,rmse_mean,rmse_std,constraint_violation_max,failures"
    );
    assert_eq!(lines.count(), 6);
    let hist = fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("mode,state,bin,lower,upper,ls,cls"));
    assert_eq!(hist.lines().count(), 1 + 3 * 30);
}

#[test]
fn bias_command_writes_one_row_per_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bias.csv");
    ok(&[
        "bias",
        "--scenario",
        "compartmental-ti",
        "--runs",
        "20",
        "--out",
        p(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 10);
}

#[test]
fn usage_errors_exit_with_two() {
    let unknown = ssid(&["montecarlo", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    let missing = ssid(&[
        "validate",
        "--estimate",
        "/nonexistent/e.json",
        "--scenario",
        "compartmental-ti",
        "--out",
        "/tmp/x.csv",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let line = String::from_utf8_lossy(&missing.stderr);
    let err: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
    let bad_method = ssid(&[
        "identify",
        "--method",
        "nope",
        "--data",
        ".",
        "--out",
        "/tmp/x.json",
    ]);
    assert_eq!(bad_method.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_nonzero_with_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "simulate",
        "--scenario",
        "compartmental-ti",
        "--out",
        p(&data),
    ]);
    // rcls-relaxed without a weight is a runtime failure, not a usage error.
    let out = ssid(&[
        "identify",
        "--method",
        "rcls-relaxed",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("e.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_parameter");
}

#[test]
fn preset_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("forest.json");
    ok(&["scenario", "--name", "forest", "--out", p(&out)]);
    let sc = ssid_cls::simulator::Scenario::load(&out).unwrap();
    assert_eq!(sc.n(), 5);
}
