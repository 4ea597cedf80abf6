use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circle-lab")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn roots_lists_critical_and_singular_points() {
    let out = run(&["roots", "--L", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["critical"].as_array().unwrap().len(), 2);
    assert_eq!(v["singular"].as_array().unwrap().len(), 2);
}

#[test]
fn infeasible_profile_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"profile": {"lambda": 0.5, "alpha": 0.01, "N": 5, "sigma_exp": 2.0}}"#).unwrap();
    let out = run(&["check", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.json");
    std::fs::write(&path, r#"{"Lambda": 3}"#).unwrap();
    assert_eq!(run(&["roots", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"L": 50.0, "a": 0.25, "n": 10}"#).unwrap();
    let out = run(&["check", "--config", path.to_str().unwrap(), "--L", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["L"], 500.0);
    assert_eq!(v["a"], 0.25);
}

#[test]
fn halted_orbit_is_reported_not_fatal() {
    // a chosen so that the critical value lands on the singular point 0.
    let l = 10.0f64;
    let c = 0.25253281574892733f64;
    let v = (c + l * (2.0 * std::f64::consts::PI * c).sin().abs().ln()).rem_euclid(1.0);
    let a = (-v).rem_euclid(1.0).to_string();
    let out = run(&["check", "--L", "10", "--a", &a, "--n", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["per_critical"][0]["halted"]["reason"], "SingularHit");
}

#[test]
fn sweep_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("sw");
    let out = run(&["sweep", "--L", "1e4", "--M", "500", "--n", "60", "--out", stem.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("sw.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "a,deltaN,g1_fail,g2_fail,g3_fail,r_fail,exclusion_step,lyapunov_slope");
    assert_eq!(lines.count(), 500);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("sw.json")).unwrap()).unwrap();
    assert_eq!(v["good_fraction"].as_array().unwrap().len(), 61);
}

#[test]
fn sweep_is_deterministic() {
    let args = ["sweep", "--L", "1e3", "--M", "300", "--n", "50", "--format", "csv"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn itinerary_and_orbit_commands_run() {
    let out = run(&["itinerary", "--L", "1e4", "--a", "0.3", "--n", "60", "--radius", "root20"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["events"].is_array());
    let out = run(&["orbit", "--L", "1e2", "--a", "0.3", "--n", "10", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 12);
}
