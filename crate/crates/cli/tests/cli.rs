use std::fs;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retention-lab"))
        .args(args)
        .output()
        .expect("spawn retention-lab")
}

fn stdout(args: &[&str]) -> String {
    let out = lab(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = ["mean-alg1", "--m", "12", "--T", "40", "--seeds", "4", "--seed", "9"];
    assert_eq!(stdout(&args), stdout(&args));
    let args = ["regress-alg2", "--m", "64", "--T", "8", "--k", "8", "--seeds", "2"];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn mean_csv_schema() {
    let csv = stdout(&["mean-baseline", "--m", "10", "--T", "3", "--seeds", "2"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,T,m,d,sq_error,max_encoding_error,compliance_ok"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn regression_csv_schema() {
    let csv = stdout(&["regress-baseline", "--m", "32", "--T", "2"]);
    assert!(csv.starts_with(
        "seed,T,m,d,k,param_sq_error,worst_case_pred_error,singular_groups,compliance_ok\n"
    ));
}

#[test]
fn files_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let json = dir.path().join("out.jsonl");
    let out = lab(&[
        "mean-improved",
        "--m",
        "16",
        "--T",
        "10",
        "--d",
        "2",
        "--seeds",
        "3",
        "--out",
        csv.to_str().unwrap(),
        "--json-out",
        json.to_str().unwrap(),
        "--check-compliance",
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 4);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&json)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["seed"], 2);
    assert_eq!(lines[0]["compliance_ok"], true);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"m": 10, "T": 5, "d": 1, "seed": 3,
            "distribution": {"variant": "GaussianMean", "theta": [1.0], "sigma": [[1.0]]}}"#,
    )
    .unwrap();
    let a = stdout(&["mean-alg1", "--config", cfg.to_str().unwrap()]);
    assert!(a.lines().nth(1).unwrap().starts_with("3,5,10,1,"));
    let b = stdout(&["mean-alg1", "--config", cfg.to_str().unwrap(), "--T", "7"]);
    assert!(b.lines().nth(1).unwrap().starts_with("3,7,10,1,"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"variant": "GaussianMean", "theta": [0.0], "sigma": [[1.0]], "extra": 1}"#).unwrap();
    for args in [
        vec!["mean-alg1", "--m", "10"],
        vec!["mean-alg1", "--m", "10", "--T", "5", "--b", "10"],
        vec!["mean-alg1", "--m", "10", "--T", "5", "--engine", "fast"],
        vec!["mean-alg1", "--m", "10", "--T", "5", "--eta", "constant"],
        vec!["mean-alg1", "--m", "10", "--T", "5", "--dist", bad.to_str().unwrap()],
        vec!["mean-improved", "--m", "10", "--T", "5", "--d", "4"],
        vec!["regress-alg2", "--m", "16", "--T", "5", "--k", "8"],
        vec!["no-such-command"],
    ] {
        assert_eq!(lab(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn run_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"m": 60, "T": 3, "d": 2, "fallback": false,
            "distribution": {"variant": "GaussianMean", "theta": [0.0, 0.0], "sigma": [[1.0, 0.0], [0.0, 1.0]]}}"#,
    )
    .unwrap();
    let out = lab(&["mean-alg1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn dp_demo_output() {
    let out = lab(&["dp-demo"]);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("{{10},{0,10}}") && err.contains("{{0}}") && err.contains("disjoint = true"));
}

#[test]
fn sgd_check_within_bound() {
    let out = lab(&["sgd-check", "--T", "500", "--seeds", "20", "--check-bound"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("t,mean_L,bound"));
    assert_eq!(csv.lines().count(), 501);
}

#[test]
fn sweep_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.json");
    fs::write(
        &spec,
        r#"{"base": {"m": 10, "T": 1, "d": 1,
                     "distribution": {"variant": "PointMass", "theta": [2.0]}},
            "axis": "T", "values": [2, 4], "seeds": 2, "algorithm": "alg1"}"#,
    )
    .unwrap();
    let csv = stdout(&["sweep", "--spec", spec.to_str().unwrap()]);
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().any(|l| l.starts_with("aggregate,alg1,T,4,2,0.0000000000000000e0")));
}

#[test]
fn probes() {
    let csv = stdout(&["lower-bound-probe", "--m", "1,8", "--trials", "20"]);
    assert_eq!(csv.lines().count(), 3);
    let csv = stdout(&["rss-probe", "--n", "5,10", "--trials", "20", "--d", "2"]);
    assert_eq!(csv.lines().count(), 3);
    let csv = stdout(&["regress-density-probe", "--trials", "500", "--bins", "10"]);
    assert_eq!(csv.lines().count(), 11);
}
