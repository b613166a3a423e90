use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use e2r::taxonomy::TaxonomyTable;
use serde_json::Value;

fn synthetic() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_40.jsonl")
}

fn e2r(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2r")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = e2r(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_writes_json_and_csv_with_run_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["stats", "--corpus", s(&synthetic()), "--out", s(dir.path())]);
    let stats = json(&dir.path().join("stats.json"));
    assert_eq!(stats["schema_version"], 1);
    assert_eq!(stats["command"], "stats");
    assert_eq!(stats["run_config"]["seed"], 42);
    assert_eq!(stats["result"]["rows"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert!(csv.starts_with("# schema_version=1 command=stats run_config={"));
}

#[test]
fn stats_missing_file_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = e2r(&["stats", "--corpus", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn stats_on_empty_corpus_has_no_rows() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    ok(&["stats", "--corpus", s(&empty), "--out", s(dir.path())]);
    let stats = json(&dir.path().join("stats.json"));
    assert!(stats["result"]["rows"].as_array().unwrap().is_empty());
}

#[test]
fn unknown_label_code_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    std::fs::write(&corpus, r#"{"id": "a", "complex": "x y", "label": "NotACode"}"#).unwrap();
    let out = e2r(&["stats", "--corpus", s(&corpus), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotACode"));
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = e2r(&[
        "train",
        "--corpus",
        s(&synthetic()),
        "--out",
        s(dir.path()),
        "--learning-rate",
        "1e305",
        "--epochs",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 3, "top_n": 4, "architecture": {"embed_dim": 16, "hidden_dim": 16}}"#).unwrap();
    ok(&[
        "stats",
        "--config",
        s(&cfg),
        "--seed",
        "11",
        "--corpus",
        s(&synthetic()),
        "--out",
        s(dir.path()),
    ]);
    let rc = &json(&dir.path().join("stats.json"))["run_config"];
    assert_eq!(rc["seed"], 11);
    assert_eq!(rc["train"]["seed"], 11);
    assert_eq!(rc["top_n"], 4);
    assert_eq!(rc["architecture"]["embed_dim"], 16);
}

#[test]
fn taxonomy_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("taxonomy.json");
    ok(&["taxonomy", "export", "--out", s(&path)]);
    assert_eq!(TaxonomyTable::load(&path).unwrap(), TaxonomyTable::default());
    let again = dir.path().join("again.json");
    ok(&["taxonomy", "export", "--taxonomy", s(&path), "--out", s(&again)]);
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    let stdout = ok(&["taxonomy", "export"]).stdout;
    assert_eq!(stdout, std::fs::read(&path).unwrap());
}

#[test]
fn baseline_reports_majority_scores() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("skewed.jsonl");
    let classes = [
        "Explanation",
        "GrammaticalAdjustments",
        "Modulation",
        "Omission",
        "Substitution",
        "Transposition",
        "SyntacticChanges",
    ];
    let sizes = [26, 25, 25, 49, 25, 25, 25];
    let mut lines = String::new();
    for (c, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            lines.push_str(&format!(
                "{{\"id\": \"{c}-{j}\", \"complex\": \"sentence {j}\", \"label\": \"{}\"}}\n",
                classes[c]
            ));
        }
    }
    std::fs::write(&corpus, lines).unwrap();
    ok(&["baseline", "--corpus", s(&corpus), "--out", s(dir.path())]);
    let b = &json(&dir.path().join("baseline.json"))["result"];
    assert_eq!(b["majority_class"], "Omission");
    let f = |v: &Value| v.as_f64().unwrap();
    assert!((f(&b["report"]["accuracy"]) - 0.245).abs() < 5e-4);
    assert!((f(&b["report"]["weighted"]["f1"]) - 0.096).abs() < 1e-3);
    assert!((f(&b["report"]["macro"]["f1"]) - 0.056).abs() < 1e-3);
    assert!((f(&b["expected"]["macro_f1"]) - f(&b["report"]["macro"]["f1"])).abs() < 1e-12);
    let txt = std::fs::read_to_string(dir.path().join("baseline.txt")).unwrap();
    assert!(txt.contains("Avg (Macro)"));
}

#[test]
fn train_then_evaluate_explain_align() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let corpus = synthetic();
    ok(&["train", "--folds", "5", "--seed", "7", "--corpus", s(&corpus), "--out", s(&train_dir)]);
    let first = std::fs::read(train_dir.join("report.json")).unwrap();
    let first_hist = std::fs::read(train_dir.join("history.csv")).unwrap();
    ok(&["train", "--folds", "5", "--seed", "7", "--corpus", s(&corpus), "--out", s(&train_dir)]);
    assert_eq!(first, std::fs::read(train_dir.join("report.json")).unwrap());
    assert_eq!(first_hist, std::fs::read(train_dir.join("history.csv")).unwrap());

    let hist = String::from_utf8(first_hist).unwrap();
    let mut lines = hist.lines().skip(1);
    assert_eq!(lines.next(), Some("epoch,fold,train_loss,val_loss,val_macro_f1"));
    assert!(lines.count() >= 5);

    let model = train_dir.join("fold_0.model.json");
    let eval_dir = dir.path().join("eval");
    ok(&["evaluate", "--model", s(&model), "--corpus", s(&corpus), "--out", s(&eval_dir)]);
    let report = json(&eval_dir.join("evaluate.json"));
    assert_eq!(report["result"]["total_support"], 40);

    let explain_dir = dir.path().join("explain");
    ok(&[
        "explain",
        "--model",
        s(&model),
        "--steps",
        "256",
        "--table",
        "--sentence",
        "The council will utilise the provision whereas people help",
        "--sentence",
        "Care",
        "--out",
        s(&explain_dir),
    ]);
    let records = json(&explain_dir.join("explanations.json"));
    let records = records["result"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    for r in records {
        assert!(r["completeness_gap"].as_f64().unwrap() <= 1e-3);
        let probs: f64 = r["probabilities"].as_array().unwrap().iter().map(|p| p[1].as_f64().unwrap()).sum();
        assert!((probs - 1.0).abs() < 1e-9);
    }
    assert_eq!(records[0]["words"].as_array().unwrap().len(), 9);
    assert_eq!(records[0]["words"][0]["word"], "The");
    assert!(std::fs::read_to_string(explain_dir.join("explanations.txt")).unwrap().contains("Contribution"));

    let align_dir = dir.path().join("align");
    ok(&[
        "align",
        "--model",
        s(&model),
        "--corpus",
        s(&corpus),
        "--threshold",
        "0.01",
        "--out",
        s(&align_dir),
    ]);
    let a = &json(&align_dir.join("align.json"))["result"];
    assert_eq!(a["pairs_aligned"], 40);
    let total = a["total_complex_words"].as_u64().unwrap();
    let removed = a["removed_complex_words"].as_u64().unwrap();
    assert!(removed <= total);
    let csv = std::fs::read_to_string(align_dir.join("top_removed.csv")).unwrap();
    assert!(csv.lines().nth(1) == Some("word,frequency"));
}

#[test]
fn complexity_task_trains_on_pair_sides() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "train",
        "--task",
        "complexity",
        "--epochs",
        "3",
        "--corpus",
        s(&synthetic()),
        "--out",
        s(dir.path()),
    ]);
    let r = &json(&dir.path().join("report.json"))["result"];
    assert_eq!(r["instances"], 80);
    assert_eq!(r["class_names"], serde_json::json!(["Simple", "Complex"]));
}
