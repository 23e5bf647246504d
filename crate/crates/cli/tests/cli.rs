//! End-to-end behaviour of the `wta` binary: outputs, formats and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn wta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wta")).args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn missing_weights_exit_code_names_the_path() {
    let out = wta(&["eval", "--policy", "rl", "--weights", "/nonexistent/policy.bin", "--episodes", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/policy.bin"));
}

#[test]
fn config_errors_exit_code() {
    assert_eq!(wta(&["eval", "--case", "no such case", "--episodes", "5"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = path(dir.path(), "bad.toml");
    std::fs::write(&bad, "m_max = \"twenty\"\n").unwrap();
    assert_eq!(wta(&["eval", "--config", &bad, "--episodes", "5"]).status.code(), Some(2));
}

#[test]
fn oracle_check_passes_and_fails_with_distinct_codes() {
    let ok = wta(&["oracle-check", "--instances", "200", "--seed", "20240101"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("200/200") && stdout.contains("max gap"));
    // this seed draws three greedy misses among 50 instances, below 95%
    let failed = wta(&["oracle-check", "--instances", "50", "--seed", "20240101"]);
    assert_eq!(failed.status.code(), Some(4));
}

#[test]
fn printed_config_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = wta(&["config", "--case", "Threat Model 1"]);
    assert!(out.status.success());
    let cfg = path(dir.path(), "tm1.toml");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let from_file = wta(&["eval", "--config", &cfg, "--policy", "heuristic", "--episodes", "50", "--no-timing"]);
    let from_case = wta(&["eval", "--case", "Threat Model 1", "--policy", "heuristic", "--episodes", "50", "--no-timing"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, from_case.stdout);
}

#[test]
fn compare_table_format() {
    let out = wta(&["compare", "--cases", "Nominal,25km Range", "--policies", "bnb,heuristic,random", "--episodes", "40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,policy,median,p25,p75,pct_of_benchmark,lat_mean_ms,lat_std_ms,lat_max_ms,intercept_frac");
    assert_eq!(lines.len(), 7);
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 10);
        assert!(cols[6].parse::<f64>().unwrap() >= 0.0, "latency column populated: {line}");
    }
    assert!(lines[1].starts_with("Nominal,bnb,") && lines[1].split(',').nth(5) == Some("100.00"));
}

#[test]
fn simulate_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let trace = path(dir.path(), "trace.csv");
    let svg = path(dir.path(), "engagement.svg");
    let out = wta(&["simulate", "--case", "Nominal", "--seed", "5", "--policy", "bnb", "--out", &trace]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("destroyed value"));
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("time,"));
    assert!(wta(&["plot", "--kind", "engagement", "--input", &trace, "--out", &svg]).status.success());
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("<polyline") && text.contains("<circle"));
}

#[test]
fn smoke_training_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let run = path(dir.path(), "run");
    let args = ["train", "--smoke", "--episodes", "32", "--seed", "3", "--out", &run];
    assert!(wta(&[&args[..], &["--iterations", "1"]].concat()).status.success());
    let resumed = wta(&[&args[..], &["--iterations", "2", "--resume"]].concat());
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    let curve = std::fs::read_to_string(dir.path().join("run/learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    let rl = wta(&["eval", "--case", "Nominal", "--policy", "rl", "--weights", &path(dir.path(), "run/weights.bin"), "--episodes", "5"]);
    // an 8x5 network cannot serve the 20x12 Nominal case
    assert_eq!(rl.status.code(), Some(2));
}
