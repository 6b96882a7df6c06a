use std::fs;
use std::process::{Command, Output};

fn lenkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lenkf")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = lenkf(&["simulate", "--dims", "10,20", "--seeds", "0,1", "--steps", "15", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let steps = fs::read_to_string(out.join("steps.csv")).unwrap();
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(steps.starts_with("# lenkf config {"));
    assert!(steps.lines().nth(1).unwrap().starts_with("regime,d,seed,n,dse_kf"));
    assert_eq!(steps.lines().count(), 2 + 4 * 15);
    assert_eq!(summary.lines().nth(1).unwrap(), "regime,d,seed,mse_kf,mse_enkf,mse_lenkf");
    assert_eq!(summary.lines().count(), 2 + 4);
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let args = ["simulate", "--dims", "12", "--seeds", "3,4,5", "--steps", "20"];
    let one = lenkf(&[&args[..], &["--threads", "1"]].concat());
    let three = lenkf(&[&args[..], &["--threads", "3"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn sweep_has_slope_footer() {
    let o = lenkf(&["sweep-epsilon", "--dims", "10", "--steps", "20", "--set", "epsilons=1,0.5,0.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("slope,"), "{last}");
    assert!(last[6..].parse::<f64>().unwrap().is_finite());
    assert_eq!(text.lines().nth(1).unwrap(), "epsilon,mse");
}

#[test]
fn phi_hat_table() {
    let o = lenkf(&["phi-hat", "--dims", "12", "--steps", "10", "--set", "phi_replicas=3", "--set", "phi_max_x=4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().nth(1).unwrap(), "x,phi_hat");
    assert_eq!(text.lines().count(), 2 + 5);
}

#[test]
fn check_theory_reports_lambda() {
    let o = lenkf(&["check-theory", "--steps", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["lambda_a"].as_f64().unwrap() - 0.5186).abs() < 1e-3);
    assert_eq!(v["config"]["regime"], "regime1");
}

#[test]
fn concentration_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tails.csv");
    let o = lenkf(&[
        "concentration",
        "--set",
        "conc_dim=20",
        "--set",
        "conc_k=4,8,16",
        "--set",
        "conc_replicas=100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "mode,d,K,t,threshold,tail_estimate,replicas");
    assert!(String::from_utf8_lossy(&o.stderr).contains("decay_fits"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"regime": "regime2", "dims": [10], "steps": 5}"#).unwrap();
    let o = lenkf(&["simulate", "--config", cfg.to_str().unwrap(), "--seeds", "7"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().nth(2).unwrap().starts_with("regime2,10,7,"));
}

#[test]
fn bad_config_exits_with_two() {
    assert_eq!(lenkf(&["simulate", "--regime", "regime9"]).status.code(), Some(2));
    assert_eq!(lenkf(&["simulate", "-k", "1"]).status.code(), Some(2));
    assert_eq!(lenkf(&["simulate", "--set", "no_such_key=3"]).status.code(), Some(2));
    assert_eq!(lenkf(&["simulate", "--set", "steps"]).status.code(), Some(2));
    assert_eq!(lenkf(&["sweep-epsilon", "--steps", "5"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_fails() {
    let o = lenkf(&["simulate", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(1));
}
