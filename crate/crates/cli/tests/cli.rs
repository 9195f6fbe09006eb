use std::process::{Command, Output};

use serde_json::Value;

fn rwpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwpt")).args(args).env_remove("RWPT_THREADS").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn strip_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("generated_at");
    v
}

#[test]
fn validate_lazy_passes() {
    let out = rwpt(&["validate", "--dist", "lazy_srw"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["command"], "validate");
    assert_eq!(v["pass"], true);
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn validate_periodic_walk_fails_with_report() {
    let table = r#"{"kind":"custom_table","params":[[1,0,"1/4"],[-1,0,"1/4"],[0,1,"1/4"],[0,-1,"1/4"]]}"#;
    let out = rwpt(&["validate", "--dist", table]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn ruin_prediction_is_one_half() {
    let out = rwpt(&["ruin", "--dist", "lazy_srw", "--r", "10", "--R", "160", "--x", "40,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["report"]["predicted"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["report"]["predicted"]["provenance"], "predicted");
    assert_eq!(v["report"]["exact"]["provenance"], "exact");
}

#[test]
fn hit_methods_agree() {
    let out = rwpt(&["hit", "--dist", "king", "--r", "3", "--R", "15", "--x", "8,1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["report"]["sup_diff"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn out_dir_gets_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run");
    let out = rwpt(&["escape", "--dist", "king", "--n", "6", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = std::fs::read_to_string(path.join("report.json")).unwrap();
    assert_eq!(serde_json::from_str::<Value>(&report).unwrap()["command"], "escape");
    let csv = std::fs::read_to_string(path.join("escape.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,exact,lower,upper\n"));
    assert!(csv.lines().count() > 50);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command":"green","dist":"lazy_srw","n":8,"x":[0,0]}"#).unwrap();
    let out = rwpt(&["green", "--config", cfg.to_str().unwrap(), "--n", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["config"]["n"], 5.0);
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"command":"green","dist":"lazy_srw","bogus":1}"#).unwrap();
    let out = rwpt(&["green", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn missing_parameter_and_unknown_flag() {
    assert_eq!(rwpt(&["green", "--dist", "lazy_srw"]).status.code(), Some(1));
    assert_eq!(rwpt(&["green", "--nope"]).status.code(), Some(1));
    assert_eq!(rwpt(&["ruin", "--dist", "lazy_srw", "--r", "10", "--R", "5", "--x", "7,0"]).status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    let out = rwpt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("harnack-exterior-toral"));
    let out = rwpt(&["mc", "--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("path_id,stop_index,x1,x2,steps"));
    assert_eq!(rwpt(&["--version"]).status.code(), Some(0));
}

#[test]
fn mc_is_deterministic_across_thread_counts() {
    let event = r#"{"kind":"mean_steps","stop":{"escape":{"kind":"disc","center":[0,0],"n":6}}}"#;
    let base = ["mc", "--dist", "lazy_srw", "--event", event, "--n-paths", "500", "--seed", "11"];
    let a = rwpt(&[&base[..], &["--threads", "1"]].concat());
    let b = rwpt(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(a.status.code(), Some(0));
    let (a, b) = (strip_time(json(&a)), strip_time(json(&b)));
    assert_eq!(a["report"], b["report"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
}

#[test]
fn predict_merges_flags() {
    let out = rwpt(&["predict", "--dist", "lazy_srw", "--formula", "escape_bounds", "--n", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["report"]["predicted"]["value"], 221.0);
    assert_eq!(v["report"]["predicted_lower"]["value"], 200.0);
}

#[test]
fn harnack_interior_small_run() {
    let out = rwpt(&["harnack-interior", "--dist", "lazy_srw", "--r", "4", "--m", "2,4"]);
    let v = json(&out);
    assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 2);
    assert_eq!(out.status.code(), Some(if v["pass"] == true { 0 } else { 2 }));
}

#[test]
fn green_writes_kernel_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = rwpt(&["green", "--dist", "lazy_srw", "--n", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("green.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,y1,y2,value\n"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("green.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["dist"]["kind"], "lazy_srw");
    assert!(meta["residual_tol"].as_f64().unwrap() > 0.0);
}
