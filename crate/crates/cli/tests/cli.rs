use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn toda(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toda"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn verify_default_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = toda(&["verify", "--seed", "7"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let first = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let b = toda(&["verify", "--seed", "7"], dir.path());
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(first, fs::read_to_string(dir.path().join("report.json")).unwrap());
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["status"], "pass");
    assert_eq!(v["seed"], 7);
}

#[test]
fn verify_periodic_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = toda(
        &[
            "verify",
            "--boundary",
            "periodic",
            "--n",
            "3",
            "--lambda",
            "0.2",
            "--mu",
            "0.35",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn impossible_tolerance_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = toda(&["verify", "--tol", "1e-300"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "fail");
}

#[test]
fn zero_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = toda(&["verify", "--lambda", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn config_file_is_read_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"experiment": "backlund", "n": 3, "iterations": 5}"#).unwrap();
    let o = toda(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("iter,x1,x2,x3,p1,p2,p3,Lambda,spectrality,trace_T,T11"));

    fs::write(&cfg, r#"{"path": []}"#).unwrap();
    let o = toda(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, "not json").unwrap();
    let o = toda(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn continuous_simulation_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = toda(
        &["simulate", "--mode", "continuous", "--n", "2", "--step", "0.01"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t1,t2,x1,x2,p1,p2,H1,H2"));
    assert!(lines.all(|l| l.split(',').count() == 8));
}

#[test]
fn sweep_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = toda(
        &["sweep", "--lambda", "0.3,5", "--mu", "0.7", "--n-grid", "2,4"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.contains("branch-invalid"));
}
