use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use itemqc::evaluation::REPORT_FILES;

fn itemqc(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itemqc"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("ITEMQC_STORE")
        .output()
        .unwrap()
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = itemqc(store, args);
    assert!(
        out.status.success(),
        "itemqc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 4] = ["--items", "20", "--persons", "400"];

fn synth_small(store: &Path, seed: &str) -> Value {
    let mut args = vec!["synth", "--seed", seed];
    args.extend(SMALL);
    serde_json::from_str(ok(store, &args).trim()).unwrap()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    synth_small(&a, "7");
    synth_small(&b, "7");
    synth_small(&c, "8");
    let hash = |s: &Path| ok(s, &["hash"]).trim().to_string();
    assert_eq!(hash(&a).len(), 64);
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));
}

#[test]
fn missing_prerequisite_names_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s");

    let out = itemqc(&store, &["stats"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("`ingest`") || err.contains("`synth`"), "{err}");

    synth_small(&store, "1");
    let out = itemqc(&store, &["run", "--variant", "M4", "--seed", "1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("`score`"), "{err}");

    let out = itemqc(&store, &["score"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`train-scorer`"));
}

#[test]
fn store_is_required_and_arguments_are_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_itemqc"))
        .arg("stats")
        .env_remove("ITEMQC_STORE")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ITEMQC_STORE"));

    let dir = tempfile::tempdir().unwrap();
    let out = itemqc(dir.path(), &["run", "--variant", "M9"]);
    assert!(!out.status.success());
    let out = itemqc(dir.path(), &["label", "--comment", "K1", "--label", "3"]);
    assert!(!out.status.success());
}

#[test]
fn store_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_itemqc"))
        .args(["synth", "--seed", "2"])
        .args(SMALL)
        .env("ITEMQC_STORE", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("data/items.csv").exists());
}

#[test]
fn full_chain_writes_every_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s");
    synth_small(&store, "5");
    let stats: Value = serde_json::from_str(ok(&store, &["stats"]).trim()).unwrap();
    assert_eq!(stats["items"], 30);
    let scorer: Value = serde_json::from_str(ok(&store, &["train-scorer", "--seed", "5", "--epoch-grid", "5,20"]).trim()).unwrap();
    assert!(scorer["validation_f1"].is_number());
    ok(&store, &["score"]);
    for v in ["M1", "M2", "M3", "M4", "M5"] {
        let out: Value = serde_json::from_str(ok(&store, &["run", "--variant", v, "--seed", "5"]).trim()).unwrap();
        assert!(out["run_id"].as_str().unwrap().starts_with(&format!("{v}-5-")));
    }
    let tables = ok(&store, &["eval"]);
    for v in ["M1", "M2", "M3", "M4", "M5"] {
        assert!(tables.contains(v), "{v} missing from\n{tables}");
    }
    for file in REPORT_FILES {
        let path = store.join("reports").join(file);
        let len = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        assert!(len > 0, "{} missing or empty", path.display());
    }
    let table4: Value = serde_json::from_str(&std::fs::read_to_string(store.join("reports/table4.json")).unwrap()).unwrap();
    assert_eq!(table4["models"].as_array().unwrap().len(), 5);

    let queue = ok(&store, &["queue", "--variant", "M4", "--limit", "3"]);
    let first: Value = serde_json::from_str(queue.lines().next().unwrap()).unwrap();
    let id = first["comment_id"].as_str().unwrap();
    let labeled: Value = serde_json::from_str(ok(&store, &["label", "--comment", id, "--label", "0"]).trim()).unwrap();
    assert_eq!(labeled["appended"], true);
    let again: Value = serde_json::from_str(ok(&store, &["label", "--comment", id, "--label", "0"]).trim()).unwrap();
    assert_eq!(again["appended"], false);
    let queue = ok(&store, &["queue", "--variant", "M4"]);
    assert!(!queue.contains(&format!("\"{id}\"")));
}

#[test]
fn imported_scores_replace_the_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s");
    synth_small(&store, "4");
    let comments = std::fs::read_to_string(store.join("data/comments.jsonl")).unwrap();
    let mut csv = String::from("comment_id,probability\n");
    let mut expected = Vec::new();
    for (k, line) in comments.lines().enumerate() {
        let v: Value = serde_json::from_str(line).unwrap();
        let id = v["comment_id"].as_str().unwrap().to_string();
        let p = (k % 100) as f64 / 100.0;
        csv.push_str(&format!("{id},{p}\n"));
        expected.push((id, p));
    }
    let import = dir.path().join("external.csv");
    std::fs::write(&import, csv).unwrap();
    let out: Value = serde_json::from_str(ok(&store, &["score", "--import", import.to_str().unwrap()]).trim()).unwrap();
    assert_eq!(out["scored"].as_u64().unwrap() as usize, expected.len());

    let scores = std::fs::read_to_string(store.join("scores/scores.csv")).unwrap();
    let mut got: Vec<(String, f64)> = scores
        .lines()
        .skip(1)
        .map(|l| {
            let (id, p) = l.split_once(',').unwrap();
            (id.to_string(), p.parse().unwrap())
        })
        .collect();
    got.sort_by(|a, b| a.0.cmp(&b.0));
    expected.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(got.len(), expected.len());
    for ((gi, gp), (ei, ep)) in got.iter().zip(&expected) {
        assert_eq!(gi, ei);
        // Imported values are clamped away from 0 and 1 only.
        assert!((gp - ep).abs() <= 1e-6 + 1e-12, "{gi}: {gp} vs {ep}");
    }

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "comment_id,probability\nK999999,0.5\n").unwrap();
    let out = itemqc(&store, &["score", "--import", bad.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn ingest_reads_a_data_directory() {
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("src");
    let synth = synth_small(&source, "6");
    let target = dir.path().join("dst");
    let data = source.join("data");
    let out: Value = serde_json::from_str(ok(&target, &["ingest", "--input", data.to_str().unwrap()]).trim()).unwrap();
    assert_eq!(out["items"], synth["items"]);
    assert_eq!(out["comments"], synth["comments"]);
    assert_eq!(out["responses"], synth["responses"]);

    let out = itemqc(&target, &["ingest", "--input", dir.path().join("nowhere").to_str().unwrap()]);
    assert!(!out.status.success());
}
