use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn saeprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saeprobe"))
        .current_dir(dir)
        .env_remove("SAEPROBE_SEED")
        .env_remove("SAEPROBE_PROFILE")
        .env_remove("SAEPROBE_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = saeprobe(dir, args);
    assert!(out.status.success(), "`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(saeprobe(dir.path(), &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(saeprobe(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(saeprobe(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(
        saeprobe(
            dir.path(),
            &["intervene", "--checkpoint", "c", "--stats", "s", "--out", "o", "--rank", "1", "--energy", "0.9"]
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn invalid_settings_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "d", "--pairs", "20"]);
    fs::write(dir.path().join("cfg.json"), r#"{"stepz": 3}"#).unwrap();
    let out = saeprobe(dir.path(), &["train", "--shards", "d/image.shard", "--config", "cfg.json", "--out", "t"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));

    let out = saeprobe(dir.path(), &["synth", "--out", "bad", "--shared-fraction", "1.5"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.shard"), b"not a shard at all").unwrap();
    assert_eq!(saeprobe(dir.path(), &["validate", "junk.shard"]).status.code(), Some(2));
    assert_eq!(saeprobe(dir.path(), &["validate", "missing.shard"]).status.code(), Some(2));
    let out = saeprobe(dir.path(), &["train", "--shards", "missing.shard", "--out", "t"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mllm_profile_dry_run_echoes_recipe() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "d", "--pairs", "20"]);
    ok(dir.path(), &["train", "--shards", "d/image.shard", "--profile", "mllm", "--dry-run", "--out", "t"]);
    let echo = read_json(&dir.path().join("t/train.config.json"));
    let s = &echo["settings"];
    assert_eq!(s["width"], 32768);
    assert_eq!(s["learning_rate"], 8e-4);
    assert_eq!(s["batch_size"], 4096);
    assert!(!dir.path().join("t/checkpoint").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "d", "--pairs", "20"]);
    fs::write(dir.path().join("cfg.json"), r#"{"steps": 3, "k": 2}"#).unwrap();
    ok(
        dir.path(),
        &["train", "--shards", "d/image.shard", "--config", "cfg.json", "--k", "5", "--dry-run", "--out", "t"],
    );
    let s = read_json(&dir.path().join("t/train.config.json"))["settings"].clone();
    assert_eq!((s["steps"].as_u64(), s["k"].as_u64()), (Some(3), Some(5)));
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "data", "--pairs", "120", "--nuisance", "20", "--shared-fraction", "1"]);
    ok(
        d,
        &[
            "train",
            "--shards",
            "data/image.shard",
            "data/text.shard",
            "--out",
            "train",
            "--steps",
            "200",
            "--width",
            "64",
        ],
    );
    ok(
        d,
        &[
            "analyze",
            "--checkpoint",
            "train/checkpoint",
            "--shards",
            "data/image.shard",
            "data/text.shard",
            "--task",
            "data/task.json",
            "--out",
            "analyze",
        ],
    );
    ok(
        d,
        &[
            "intervene",
            "--checkpoint",
            "train/checkpoint",
            "--stats",
            "analyze/stats.json",
            "--out",
            "intervene",
            "--fraction",
            "0.05",
        ],
    );
    let stdout = ok(
        d,
        &[
            "eval",
            "--shards",
            "data/image.shard",
            "data/text.shard",
            "--task",
            "data/task.json",
            "--subspace",
            "intervene/subspace",
            "--out",
            "eval",
            "--k",
            "1,5",
        ],
    );
    assert!(stdout.contains("R@1="), "{stdout}");

    let report = read_json(&d.join("eval/report.json"));
    assert_eq!(report["num_queries"], 120);
    assert!(report["recall_at"]["5"].as_f64().unwrap() >= report["recall_at"]["1"].as_f64().unwrap());

    let csv = ok(d, &["report", "--input", "eval/report.json", "--format", "csv"]);
    assert_eq!(csv.lines().next(), Some("K,recall"));
    assert_eq!(csv.lines().count(), 3);
    let stats_csv = ok(d, &["report", "--input", "analyze/stats.json"]);
    assert_eq!(stats_csv.lines().next(), Some(saeprobe::metrics::STATS_HEADER));
    assert_eq!(stats_csv.lines().count(), 65);
    let json = ok(d, &["report", "--input", "eval/report.json", "--format", "json"]);
    serde_json::from_str::<Value>(&json).unwrap();

    for p in ["data/image.shard", "data/text.shard", "data/task.json", "train/checkpoint", "intervene/subspace"] {
        ok(d, &["validate", p]);
    }
    let top = read_json(&d.join("analyze/top_sets.json"));
    assert!(top.is_object());
}
