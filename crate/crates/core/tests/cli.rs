//! End-to-end runs of the `capml` binary.

use std::path::Path;
use std::process::{Command, Output};

fn capml(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_capml"));
    cmd.args(args).env_remove("CAPML_OUTPUT_ROOT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn learn_evaluate_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"environment": {"name": "vacuum"}, "seed": 5, "learner": {"max_queries": 6}}"#);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();

    let r = capml(&["learn", "--config", &cfg, "--variant", "sampled", "--out", out_s], &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let progress = String::from_utf8(r.stdout).unwrap();
    assert_eq!(progress.lines().filter(|l| l.starts_with('q')).count(), 6);
    for f in ["model.json", "model.txt", "runlog.jsonl", "dataset.jsonl", "last_query.json", "run.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(std::fs::read_dir(out.join("snapshots")).unwrap().count(), 6);

    let csv = dir.path().join("eval.csv");
    let r = capml(&["evaluate", "--run", out_s, "--episodes", "50", "--out", csv.to_str().unwrap()], &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "checkpoint,queries,unique_transitions,vd_sampled,vd_exact_if_available,wall_seconds"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("q0000,1,"));

    let r = capml(&["inspect", "--model", out.join("model.json").to_str().unwrap()], &[]);
    assert!(r.status.success());
    let listing = String::from_utf8(r.stdout).unwrap();
    assert!(listing.contains("Capability Name: achieve__clean(l1)"));

    let r = capml(&["inspect", "--dataset", out.join("dataset.jsonl").to_str().unwrap()], &[]);
    assert!(r.status.success());
    let first: serde_json::Value = serde_json::from_str(String::from_utf8(r.stdout).unwrap().lines().next().unwrap()).unwrap();
    assert!(first.get("count").is_some());

    let r = capml(&["inspect", "--last-query", out.join("last_query.json").to_str().unwrap()], &[]);
    assert!(r.status.success());
}

#[test]
fn output_root_env_var_sets_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"environment": {"name": "roads"}, "seed": 1, "learner": {"max_queries": 2}}"#);
    let r = capml(&["learn", "--quiet", "--config", &cfg, "--variant", "random"], &[("CAPML_OUTPUT_ROOT", dir.path())]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(dir.path().join("roads-random-seed1").join("model.json").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(capml(&["learn", "--config", "/no/such/file.json"], &[]).status.code(), Some(2));
    let bad = write_config(dir.path(), r#"{"environment": {"name": "vacuum"}, "learner": {"horizon": 0}}"#);
    assert_eq!(capml(&["learn", "--config", &bad], &[]).status.code(), Some(2));
    assert_eq!(capml(&["inspect", "--ground-truth", "nowhere"], &[]).status.code(), Some(2));
    assert_eq!(capml(&["inspect"], &[]).status.code(), Some(2));
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(capml(&["evaluate", "--run", empty.to_str().unwrap()], &[]).status.code(), Some(1));
    let r = capml(&["inspect", "--ground-truth", "blocks"], &[]);
    assert_eq!(r.status.code(), Some(0));
}
