use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qevo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qevo")).current_dir(dir).args(args).env("QEVO_THREADS", "2").output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn run_writes_record_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = qevo(dir.path(), &["run", "--preset", "plogp_k6", "--seed", "7", "--max-iterations", "4", "--shots", "128"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(dir.path().join("runs/plogp_k6_seed7.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(dir.path().join("runs/plogp_k6_seed7.summary.json").exists());
}

#[test]
fn unknown_preset_exits_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = qevo(dir.path(), &["run", "--preset", "plogp_k12"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "unknown_preset");
    assert!(err["message"].as_str().unwrap().contains("plogp_k12"));
}

#[test]
fn missing_reference_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qevo(dir.path(), &["run", "--preset", "plogp_k6", "--reference", "nope.bin"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "io");
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qevo"))
        .current_dir(dir.path())
        .args(["validate-config", "x.toml"])
        .env("QEVO_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn validate_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = qevo::driver::preset("drug_k6").unwrap().to_toml();
    fs::write(dir.path().join("c.toml"), &cfg).unwrap();
    let out = qevo(dir.path(), &["validate-config", "c.toml"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), cfg);

    fs::write(dir.path().join("bad.toml"), cfg.replace("shots = 1024", "shots = \"many\"")).unwrap();
    let out = qevo(dir.path(), &["validate-config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn batch_refspace_pca_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = qevo(dir.path(), &["refspace", "--preset", "plogp_k6", "--out", "ref/k6.bin", "--csv", "ref/top.csv", "--top", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let top = fs::read_to_string(dir.path().join("ref/top.csv")).unwrap();
    assert_eq!(top.lines().count(), 11);
    assert!(top.lines().nth(1).unwrap().starts_with("1,CCCCCC,"));

    let out = qevo(
        dir.path(),
        &["batch", "--preset", "plogp_k6", "--seeds", "1..3", "--max-iterations", "6", "--reference", "ref/k6.bin"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("runs/plogp_k6_batch.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    assert!(summary["success_rate"].is_number());
    for seed in 1..=3 {
        assert!(dir.path().join(format!("runs/plogp_k6_seed{seed}.jsonl")).exists());
    }

    let out = qevo(dir.path(), &["pca", "--reference", "ref/k6.bin", "--runs", "runs", "--out", "pca.csv", "--model", "pca.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pca = fs::read_to_string(dir.path().join("pca.csv")).unwrap();
    assert!(pca.starts_with("run,seed,canonical,score,first_iteration,window,pc1,pc2"));
    assert!(pca.lines().count() > 100);

    let export = ["export", "--runs", "runs", "--top", "40", "--out", "cand.csv", "--traces", "traces"];
    assert!(qevo(dir.path(), &export).status.success());
    let first = fs::read(dir.path().join("cand.csv")).unwrap();
    assert!(qevo(dir.path(), &export).status.success());
    assert_eq!(fs::read(dir.path().join("cand.csv")).unwrap(), first);
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 41);
    assert_eq!(fs::read_dir(dir.path().join("traces")).unwrap().count(), 3);
}

#[test]
fn pca_rejects_mismatched_reference() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qevo(dir.path(), &["refspace", "--preset", "drug_k6", "--out", "drug.bin"]).status.success());
    assert!(qevo(dir.path(), &["run", "--preset", "plogp_k6", "--max-iterations", "1", "--shots", "64"]).status.success());
    let out = qevo(dir.path(), &["pca", "--reference", "drug.bin", "--runs", "runs", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "scope_mismatch");
}
