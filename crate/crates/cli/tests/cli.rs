use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn skewlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skewlab")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lyapunov_csv_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["lyapunov", "--set", "map=f_star", "--set", "n_steps=1e5", "--set", "seed=7"];
    for d in [&a, &b] {
        let o = skewlab(&args, d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let x = std::fs::read(a.path().join("lyapunov.csv")).unwrap();
    let y = std::fs::read(b.path().join("lyapunov.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(
        std::fs::read(a.path().join("lyapunov.json")).unwrap(),
        std::fs::read(b.path().join("lyapunov.json")).unwrap()
    );
    let first = String::from_utf8(x).unwrap().lines().next().unwrap().to_string();
    let header: Value = serde_json::from_str(first.strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(header["seed"], 7);
    assert_eq!(header["map"], "f_star");
    assert_eq!(header["config"]["lyapunov"]["n_steps"], 100_000);
}

#[test]
fn foliation_pencil_verdict_is_exact_zero() {
    let d = tempfile::tempdir().unwrap();
    let o = skewlab(&["foliation", "--set", "map=f_star", "--set", "form=pencil_001", "--set", "mode=exact"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&d.path().join("foliation.json"));
    assert_eq!(v["result"]["report"]["verdict"], true);
    assert_eq!(v["result"]["report"]["witness_coefficient"], Value::Null);
    assert_eq!(v["result"]["report"]["mode"], "exact");
}

#[test]
fn perturbed_foliation_gives_a_witness() {
    let d = tempfile::tempdir().unwrap();
    let o = skewlab(&["foliation", "--set", "map=f_star_perturbed"], d.path());
    assert!(o.status.success());
    let v = json(&d.path().join("foliation.json"));
    assert_eq!(v["result"]["report"]["verdict"], false);
    assert!(v["result"]["report"]["witness_coefficient"].is_object());
}

#[test]
fn green_monomial_is_log_two() {
    let d = tempfile::tempdir().unwrap();
    let o = skewlab(&["green", "--set", "map=monomial2", "--set", "point=[2,1,1]", "--set", "tol=1e-10"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&d.path().join("green.json"));
    let g = v["result"]["value"].as_f64().unwrap();
    assert!((g - 2f64.ln()).abs() < 1e-10, "{g}");
    assert_eq!(v["status"], "pass");
}

#[test]
fn empty_bundle_reports_ok() {
    let d = tempfile::tempdir().unwrap();
    let o = skewlab(&["report"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&d.path().join("report.json"));
    assert_eq!(v["status"], "ok");
    assert_eq!(v["artifacts"].as_array().unwrap().len(), 0);
    let acc = v["acceptance"].as_array().unwrap();
    assert_eq!(acc.len(), 13);
    assert!(acc.iter().all(|a| a["status"] == "not_run"));
}

#[test]
fn mixed_versions_are_rejected_by_name() {
    let d = tempfile::tempdir().unwrap();
    let bundle = d.path().join("bundle");
    let o = skewlab(&["green", "--set", "map=monomial2"], &bundle);
    assert!(o.status.success());
    let mut v = json(&bundle.join("green.json"));
    v["header"]["artifact_version"] = "skewlab-artifact/0".into();
    std::fs::write(bundle.join("old.json"), serde_json::to_string(&v).unwrap()).unwrap();
    let b = bundle.to_str().unwrap();
    let o = skewlab(&["report", "--set", &format!("bundle=[\"{b}\"]")], &d.path().join("rep"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("skewlab-artifact/0") && err.contains("skewlab-artifact/1"), "{err}");
}

#[test]
fn report_collects_criteria_from_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let bundle = d.path().join("bundle");
    assert!(skewlab(&["periodic"], &bundle).status.success());
    assert!(skewlab(&["foliation", "--set", "catalog=true"], &bundle).status.success());
    let b = bundle.to_str().unwrap();
    let o = skewlab(&["report", "--set", &format!("bundle=[\"{b}\"]")], &d.path().join("rep"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&d.path().join("rep/report.json"));
    let status =
        |id: u64| v["acceptance"].as_array().unwrap().iter().find(|a| a["id"] == id).unwrap()["status"].clone();
    assert_eq!(status(2), "pass");
    assert_eq!(status(10), "pass");
    assert_eq!(status(1), "not_run");
    assert_eq!(v["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn schema_violations_exit_with_contract_error() {
    let d = tempfile::tempdir().unwrap();
    let o = skewlab(&["green", "--set", "bogus=1"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = skewlab(&["lyapunov", "--set", "n_steps=2.5"], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exceeded_budget_exits_with_two() {
    let d = tempfile::tempdir().unwrap();
    let o = skewlab(&["slice", "--set", "depth=9"], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn config_file_and_overrides_combine() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("exp.toml");
    std::fs::write(&cfg, "map = \"monomial2\"\nseed = 3\n[green]\npoint = [1, 2, [0, 1]]\n").unwrap();
    let o = skewlab(&["green", "--config", cfg.to_str().unwrap(), "--set", "tol=1e-12"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&d.path().join("green.json"));
    assert_eq!(v["header"]["seed"], 3);
    assert_eq!(v["header"]["config"]["green"]["tol"], 1e-12);
    assert_eq!(v["header"]["config"]["precision"], "double");
    assert!((v["result"]["value"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
}

#[test]
fn soft_failures_exit_with_three() {
    let d = tempfile::tempdir().unwrap();
    // double precision cannot reach the extended-precision conjugacy order
    let o = skewlab(&["normal-form", "--set", "precision=double"], d.path());
    assert_eq!(o.status.code(), Some(3));
    let v = json(&d.path().join("normal-form.json"));
    assert_eq!(v["status"], "soft_fail");
}
