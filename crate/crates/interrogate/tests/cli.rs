mod common;

use std::path::Path;
use std::process::{Command, Output};

use interrogate::backend::simulated::SimulatedEmbedder;
use interrogate::evaluation::baselines::{calibrate, load_pairs};
use interrogate::evaluation::dataset::load_dataset;
use interrogate::evaluation::harness::load_records;
use interrogate_core::NgramEmbedder;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_interrogate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn synth(dir: &Path, items: &str) -> String {
    let out = run(&["synth", "--out", dir.to_str().unwrap(), "--items", items, "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.toml").to_str().unwrap().to_string()
}

fn first_query(dir: &Path) -> String {
    let records = load_dataset(&dir.join("gci.jsonl")).unwrap();
    format!("What is the capital of {}?", records[0].query_fields["country"])
}

#[test]
fn evaluate_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "18");
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        let o = run(&["evaluate", "--config", &cfg, "--output", out.to_str().unwrap(), "--parallelism", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("hallucination-oriented"));
    }
    for f in ["records.jsonl", "report.json", "report.txt", "k_series.csv"] {
        let a = std::fs::read(out1.join(f)).unwrap();
        assert_eq!(a, std::fs::read(out2.join(f)).unwrap(), "{f} differs");
    }
    assert!(out1.join("run_meta.json").exists());
    let csv = std::fs::read_to_string(out1.join("k_series.csv")).unwrap();
    assert!(csv.starts_with("task,forward_backend,k,auc,balanced_accuracy\n"));
    for k in 1..=5 {
        assert!(csv.contains(&format!("mean,all,{k},")));
    }
    let records = load_records(&out1.join("records.jsonl")).unwrap();
    assert_eq!(records.len(), 18);
    for r in &records {
        for m in ["interrogate", "embed-cosine", "selfcheck"] {
            assert!(r.method_scores.contains_key(m) && r.method_verdicts.contains_key(m));
        }
    }
}

#[test]
fn task_and_method_filters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "9");
    let out = dir.path().join("o");
    let o = run(&[
        "evaluate", "--config", &cfg, "--output", out.to_str().unwrap(), "--tasks", "gci", "--methods",
        "interrogate", "--json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["task"] == "gci"));
    assert!(rows.iter().all(|r| r["method"].as_str().unwrap().starts_with("interrogate")));
}

#[test]
fn detect_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "6");
    let q = first_query(dir.path());
    let never = run(&["detect", "--config", &cfg, "--task", "gci", "--query", &q, "--tau", "-1"]);
    assert_eq!(never.status.code(), Some(0), "{}", String::from_utf8_lossy(&never.stderr));
    let always = run(&[
        "detect", "--config", &cfg, "--task", "gci", "--query", &q, "--answer", "The capital is Nowhere.", "--tau", "1",
    ]);
    assert_eq!(always.status.code(), Some(1));
    let bad = run(&["detect", "--task", "gci", "--query", &q]);
    assert_eq!(bad.status.code(), Some(2));
    let bad_tau = run(&["detect", "--config", &cfg, "--query", &q, "--tau", "3"]);
    assert_eq!(bad_tau.status.code(), Some(2));
}

#[test]
fn detect_json_honours_k_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "6");
    let q = first_query(dir.path());
    let o = run(&["detect", "--config", &cfg, "--task", "gci", "--query", &q, "--k", "1", "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["reconstructions"].as_array().unwrap().len(), 1);
    assert_eq!(v["config"]["k"], 1);
    assert_eq!(o.status.code(), Some(i32::from(v["verdict"].as_bool().unwrap())));
}

#[test]
fn calibrate_prints_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "3");
    let pairs = common::repo_root().join("data/calibration_pairs.jsonl");
    let o = run(&["calibrate", "--config", &cfg, "--pairs", pairs.to_str().unwrap(), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let embedder = SimulatedEmbedder::new("ngram", NgramEmbedder::default());
    let expected = calibrate(&load_pairs(&pairs).unwrap(), &embedder).unwrap();
    assert_eq!(v["threshold"].as_f64().unwrap(), expected.value);
    assert_eq!(v["balanced_accuracy"].as_f64().unwrap(), expected.balanced_accuracy);
}

#[test]
fn report_rejects_empty_records() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["report", "--records", empty.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_regenerates_from_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "9");
    let out = dir.path().join("o");
    assert!(run(&["evaluate", "--config", &cfg, "--output", out.to_str().unwrap()]).status.success());
    let again = dir.path().join("again");
    let records = out.join("records.jsonl");
    let o = run(&["report", "--records", records.to_str().unwrap(), "--output", again.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("k_series.csv")).unwrap(),
        std::fs::read(again.join("k_series.csv")).unwrap()
    );
}

#[test]
fn shipped_fixtures_load_and_canonical_answers_verify() {
    let root = common::repo_root().join("data");
    let canonical = |r: &interrogate::evaluation::dataset::DatasetRecord| match r.task {
        interrogate_core::TaskKind::Movies => {
            let cast: Vec<String> =
                r.truth_fields["cast"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
            format!("The main cast included {}.", cast.join(", "))
        }
        interrogate_core::TaskKind::Books => format!(
            "The author is {}, and it was published in {}.",
            r.truth_fields["author"].as_str().unwrap(),
            r.truth_fields["year"]
        ),
        _ => format!("The capital is {}.", r.truth_fields["capital"].as_str().unwrap()),
    };
    for f in ["movies.jsonl", "books.jsonl", "gci.jsonl"] {
        let records = load_dataset(&root.join(f)).unwrap();
        assert!(!records.is_empty() && records.len() <= 30);
        for r in &records {
            assert!(!r.verify(&canonical(r)).unwrap().hallucination, "{}", r.id);
            assert!(r.verify("I am not sure.").unwrap().hallucination, "{}", r.id);
        }
    }
    let live = interrogate::config::RunConfig::parse(
        &std::fs::read_to_string(common::repo_root().join("configs/live.example.toml")).unwrap(),
    )
    .unwrap();
    live.validate().unwrap();
}
