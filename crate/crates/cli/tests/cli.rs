use std::path::Path;
use std::process::{Command, Output};

fn balloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn check_conditions_two_choice() {
    let v = stdout_json(&balloc(&["check-conditions", "two_choice", "10"]));
    assert_eq!(v["n"], 10);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 5);
    assert!(reports.iter().all(|r| r["holds"] == true));
    assert_eq!(v["vector"][9], 0.19);
}

#[test]
fn check_conditions_one_choice_fails_prefix() {
    let v = stdout_json(&balloc(&["check-conditions", "one_choice", "8"]));
    let c1 = v["reports"].as_array().unwrap().iter().find(|r| r["condition"] == "C1").unwrap();
    assert_eq!(c1["holds"], false);
}

#[test]
fn unknown_process_is_an_error() {
    let out = balloc(&["check-conditions", "five_choice", "8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("five_choice"));
}

#[test]
fn graph_then_conductance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h3.txt");
    let out = balloc(&["graph", "hypercube:3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&balloc(&["conductance", path.to_str().unwrap()]));
    assert_eq!(v["conductance"]["phi"].as_f64().unwrap(), 1.0 / 3.0);
    assert_eq!(v["d"], 3);
}

#[test]
fn simulate_prints_boundaries() {
    let out = balloc(&["--seed", "3", "simulate", "--n", "16", "--b", "16", "--m", "160"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,gap,min_y"));
    assert_eq!(lines.count(), 11);
    let again = balloc(&["--seed", "3", "simulate", "--n", "16", "--b", "16", "--m", "160"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn campaign_from_config_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"name": "t", "n": 16, "b": 16, "m": 256,
            "sweep": [{"field": "b_over_n", "values": [1, 2]}],
            "runs_per_point": 2}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let csv = dir.path().join(name);
        let out = balloc(&["--seed", "9", "--threads", "2", "campaign", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(&csv).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("point_id,b_over_n,run,seed,final_gap,final_min_y,runtime_ms\n"));
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(Path::new(&format!("{}.meta.json", dir.path().join("a.csv").display())).exists());
}

#[test]
fn campaign_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"n\": 8, \"b\": 8, \"m\": 64,\n \"batchsize\": 3}").unwrap();
    let out = balloc(&["campaign", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("batchsize") && err.contains("line 2"), "{err}");
}

#[test]
fn drift_check_reports_no_violations() {
    let v = stdout_json(&balloc(&["drift-check", "--n", "32", "--vectors", "100"]));
    assert_eq!(v["violations"], 0);
    assert_eq!(v["cases"].as_array().unwrap().len(), 4);
}

#[test]
fn lower_bound_subcommands() {
    let v = stdout_json(&balloc(&["lower-bound", "poisson", "--n", "50", "--trials", "500"]));
    assert_eq!(v["estimates"].as_array().unwrap().len(), 3);
    let v = stdout_json(&balloc(&["lower-bound", "log", "--n", "64", "--runs", "5", "--process", "quantile:0.5"]));
    assert_eq!(v["gaps"].as_array().unwrap().len(), 5);
    let out = balloc(&["lower-bound", "log", "--n", "64", "--process", "two_choice"]);
    assert_eq!(out.status.code(), Some(2));
    let v = stdout_json(&balloc(&["lower-bound", "first-batch", "--n", "32", "--runs", "20"]));
    assert_eq!(v["gamma"], 0.5);
}

#[test]
fn calibrate_matches_committed_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.json");
    let out = balloc(&["calibrate", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let fresh: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let committed: serde_json::Value = serde_json::from_str(include_str!("../../core/calibration.json")).unwrap();
    assert_eq!(fresh, committed);
}
