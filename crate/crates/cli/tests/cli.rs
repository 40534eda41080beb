use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/three_bus")
}

fn psps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psps")).args(args).output().unwrap()
}

fn config() -> String {
    data().join("config.json").to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_clock(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("created_unix");
    v
}

#[test]
fn run_writes_a_reproducible_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = psps(&["run", "--config", &config(), "--out", dir.path().to_str().unwrap(), "--samples", "50"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ma = read_json(&a.path().join("manifest.json"));
    let mb = read_json(&b.path().join("manifest.json"));
    assert_eq!(without_clock(ma.clone()), without_clock(mb));
    assert_eq!(ma["command"], "run");
    assert_eq!(ma["seed"], 7);
    let names: Vec<&str> = ma["artifacts"].as_array().unwrap().iter().map(|x| x["path"].as_str().unwrap()).collect();
    for expected in ["plan.json", "costs.json", "dispatch.csv", "rt_report.json", "scenarios.json", "line_risk.json"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
        assert!(a.path().join(expected).is_file());
    }
    let report = read_json(&a.path().join("rt_report.json"));
    assert_eq!(report["samples"], 50);
}

#[test]
fn seed_override_changes_the_config_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, seed: &str| {
        let out = psps(&["solve-da", "--config", &config(), "--out", dir.to_str().unwrap(), "--seed", seed]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        read_json(&dir.join("manifest.json"))
    };
    let ma = run(a.path(), "1");
    let mb = run(b.path(), "2");
    assert_ne!(ma["config_hash"], mb["config_hash"]);
    assert!(!a.path().join("rt_report.json").exists());
}

#[test]
fn missing_input_is_a_structured_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&data().join("config.json"));
    cfg["raster"]["path"] = Value::from("nope.asc");
    cfg["network"] = Value::from(data().join("network.json").to_string_lossy().into_owned());
    let path = dir.path().join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = psps(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["stage"], "risk-pipeline");
    assert_eq!(err["error"]["kind"], "ParseError");
    assert_eq!(err["error"]["exit_code"], 2);
    assert!(err["error"]["message"].as_str().unwrap().contains("nope.asc"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&data().join("config.json"));
    cfg["pi_tolerance"] = Value::from(0.2);
    let path = dir.path().join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = psps(&["solve-da", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["stage"], "config");
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = psps(&["sweep", "--config", &config(), "--out", dir.path().to_str().unwrap(), "--samples", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3, "{summary}");
    assert!(lines[0].starts_with("point,admitted_lines,pi_tol"));
    for p in ["point_01", "point_02"] {
        assert!(dir.path().join(p).join("plan.json").is_file());
    }
}

#[test]
fn saved_plan_can_be_replayed() {
    let dir = tempfile::tempdir().unwrap();
    let da = dir.path().join("da");
    let rt = dir.path().join("rt");
    let out = psps(&["solve-da", "--config", &config(), "--out", da.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan = da.join("plan.json");
    let out = psps(&[
        "simulate-rt",
        "--config",
        &config(),
        "--out",
        rt.to_str().unwrap(),
        "--plan",
        plan.to_str().unwrap(),
        "--samples",
        "30",
        "--onset",
        "whole-day",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&rt.join("rt_report.json"));
    assert_eq!(report["onset"], "whole-day");
    assert_eq!(report["per_scenario_cost"].as_array().unwrap().len(), 30);

    let missing = psps(&["simulate-rt", "--config", &config(), "--out", rt.to_str().unwrap(), "--plan", "absent.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn mae_report_from_csv_series() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let months = |v: f64| vec![v.to_string(); 12].join(",");
    let header = "id,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10,m11,m12\n";
    std::fs::write(d.join("wfpi.csv"), format!("{header}19,{}\n", months(2.84e-6))).unwrap();
    std::fs::write(d.join("wlfp.csv"), format!("{header}19,{}\n", months(1.46e-6))).unwrap();
    std::fs::write(d.join("owip.csv"), format!("{header}0,{}\n", months(0.0))).unwrap();
    std::fs::write(d.join("assign.csv"), "bus,cluster\n19,0\n").unwrap();
    let p = |n: &str| d.join(n).to_string_lossy().into_owned();
    let out = psps(&[
        "analyze",
        "mae",
        "--wip",
        &p("wfpi.csv"),
        "--wip-second",
        &p("wlfp.csv"),
        "--owip",
        &p("owip.csv"),
        "--assignment",
        &p("assign.csv"),
        "--out",
        &p("out"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_json(&d.join("out/mae.json"));
    let imp = rows[0]["improvement_pct"].as_f64().unwrap();
    assert!((imp - 48.59).abs() < 0.01, "{imp}");
}
