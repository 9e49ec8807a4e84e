use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn equifold(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equifold")).args(args).output().expect("binary runs")
}

fn z4_json() -> Value {
    serde_json::from_str(include_str!("../fixtures/z4_mod_z2_triangle.json")).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn partial_run_passes_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.jsonl");
    let o = equifold(&[
        "run", "--config", "builtin:s3_mod_a3_multigraph", "--suite", "algebra", "--suite", "wave", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["rng"], "ChaCha20");
    assert_eq!(header["tower"], "s3_mod_a3_multigraph");
    for l in lines {
        let r: Value = serde_json::from_str(l).unwrap();
        assert!(r["suite"] == "algebra" || r["suite"] == "wave");
        assert_eq!(r["pass"], true);
        assert!(r.get("wall_time_ms").is_none());
    }
    let csv = std::fs::read_to_string(dir.path().join("report.jsonl.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "suite,checks,passed,failed,max_residual");
    assert_eq!(csv.lines().count(), 3);
}

// The rho suite includes the propagation bound, which graph operators do not
// meet at τ = 1e-9, so a full run reports failures.
#[test]
fn full_run_reports_failed_checks() {
    let o = equifold(&["run", "--config", "builtin:z4_mod_z2_triangle"]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let failed: Vec<Value> = stdout
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|r| r["pass"] == false)
        .collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|r| r["check"].as_str().unwrap().starts_with("propagation_bound")));
}

#[test]
fn reports_are_reproducible() {
    let args = ["run", "--config", "builtin:z6_mod_z2_square_graded", "--suite", "folding", "--suite", "index", "--seed", "7"];
    let a = equifold(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_equifold")).args(args).env("EQUIFOLD_THREADS", "1").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = equifold(&["run", "--config", "builtin:z6_mod_z2_square_graded", "--suite", "folding", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn timings_are_opt_in() {
    let o = equifold(&["run", "--config", "builtin:s3_mod_a3_multigraph", "--suite", "algebra", "--timings"]);
    let line = String::from_utf8(o.stdout).unwrap().lines().nth(1).unwrap().to_string();
    let r: Value = serde_json::from_str(&line).unwrap();
    assert!(r["wall_time_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(include_str!("../fixtures/s3_mod_a3_multigraph.json")).unwrap();
    v["normal_subgroup"] = serde_json::json!([[1, 0, 2]]);
    let path = write_config(dir.path(), "bad.json", &v);
    let o = equifold(&["run", "--config", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("is_normal"));
    assert!(o.stdout.is_empty());

    let mut v = z4_json();
    v["surprise"] = Value::Bool(true);
    let path = write_config(dir.path(), "unknown.json", &v);
    assert_eq!(equifold(&["run", "--config", &path]).status.code(), Some(2));
    assert_eq!(equifold(&["run", "--config", "/nonexistent/x.json"]).status.code(), Some(2));
    assert_eq!(equifold(&["run", "--config", "builtin:nope"]).status.code(), Some(2));
    let o = equifold(&["run", "--config", "builtin:z4_mod_z2_triangle", "--suite", "everything"]);
    assert_eq!(o.status.code(), Some(2));
}

fn describe_field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("missing {key}"))
        .to_string()
}

#[test]
fn describe_trivial_and_cyclic_towers() {
    let o = equifold(&["describe", "--config", "builtin:z4_mod_z2_triangle"]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(describe_field(&out, "group_order"), "4");
    assert_eq!(describe_field(&out, "subgroup_order"), "2");
    assert_eq!(describe_field(&out, "m1_vertices"), "12");
    assert_eq!(describe_field(&out, "m2_vertices"), "6");
    assert!(describe_field(&out, "spectral_gap").parse::<f64>().unwrap() > 0.1);

    let dir = tempfile::tempdir().unwrap();
    let mut v = z4_json();
    v["group"] = serde_json::json!({"cyclic": 1});
    v["normal_subgroup"] = serde_json::json!([]);
    v["coarser_subgroup"] = Value::Null;
    v["voltages"] = serde_json::json!([0, 0, 0]);
    let path = write_config(dir.path(), "trivial.json", &v);
    let o = equifold(&["describe", "--config", &path]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(describe_field(&out, "group_order"), "1");
    assert_eq!(describe_field(&out, "m1_vertices"), "3");
    assert_eq!(describe_field(&out, "m2_vertices"), "3");
}
