use std::fs;
use std::path::{Path, PathBuf};

use kgq::cli::run;
use serde_json::json;

fn kgq(args: &[&str]) -> i32 {
    run(std::iter::once("kgq").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/dblp")
}

/// Synthetic workspace, ingested and trained with a short schedule.
fn trained(dir: &Path, papers: usize) -> PathBuf {
    assert_eq!(kgq(&["synth", "--papers", &papers.to_string(), "--seed", "5", "--out", s(dir)]), 0);
    assert_eq!(kgq(&["ingest", s(&dir.join("kg.tsv")), "--out", s(dir)]), 0);
    let cfg = dir.join("task.json");
    assert_eq!(kgq(&["train", "--config", s(&cfg), "--epochs", "5", "--hidden-dim", "8"]), 0);
    assert_eq!(kgq(&["decompose", "--config", s(&cfg)]), 0);
    cfg
}

#[test]
fn ingest_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(kgq(&["synth", "--papers", "40", "--out", s(d.path())]), 0);
    let kg = d.path().join("kg.tsv");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(kgq(&["ingest", s(&kg), "--out", s(&a)]), 0);
    assert_eq!(kgq(&["ingest", s(&kg), "--out", s(&b)]), 0);
    for f in ["graph.tsv", "schema_stats.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(kgq(&["stats", "--schema", s(&a.join("schema_stats.tsv"))]), 0);
    assert_eq!(kgq(&["stats", s(&kg)]), 0);
}

#[test]
fn full_workflow_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = trained(d.path(), 60);
    let q = d.path().join("query_targets.txt");
    let (o1, o2) = (d.path().join("run1"), d.path().join("run2"));
    assert_eq!(kgq(&["infer", "--config", s(&cfg), "--targets", s(&q), "--out", s(&o1)]), 0);
    assert_eq!(kgq(&["infer", "--config", s(&cfg), "--targets", s(&q), "--out", s(&o2), "--parallel", "3", "--batch-size", "2"]), 0);
    let p1 = fs::read_to_string(o1.join("predictions.jsonl")).unwrap();
    assert_eq!(p1.lines().count(), 12);
    assert_eq!(p1, fs::read_to_string(o2.join("predictions.jsonl")).unwrap());
    assert!(o1.join("trace.json").exists() && o1.join("metrics.json").exists());

    assert_eq!(kgq(&["bench", "--config", s(&cfg), "--targets", s(&q)]), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.path().join("out/bench.json")).unwrap()).unwrap();
    assert_eq!(report["predictions_agree"], true);

    let empty = d.path().join("none.txt");
    fs::write(&empty, "# nothing\n\n").unwrap();
    let o3 = d.path().join("run3");
    assert_eq!(kgq(&["infer", "--config", s(&cfg), "--targets", s(&empty), "--out", s(&o3)]), 0);
    assert_eq!(fs::read_to_string(o3.join("predictions.jsonl")).unwrap(), "");
}

#[test]
fn error_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = trained(d.path(), 30);
    let q = d.path().join("query_targets.txt");
    assert_eq!(kgq(&["infer", "--config", s(&cfg), "--targets", s(&d.path().join("missing.txt"))]), 4);
    assert_eq!(kgq(&["ingest", s(&d.path().join("missing.tsv"))]), 4);
    assert_eq!(kgq(&["train", "--config", s(&d.path().join("missing.json"))]), 4);
    assert_eq!(kgq(&["train", "--config", s(&cfg), "--mode", "fast"]), 1);
    assert_eq!(kgq(&["bogus"]), 1);
    assert_eq!(kgq(&["--help"]), 0);

    let bad = d.path().join("bad.json");
    fs::write(&bad, r#"{"task": "x", "surprise": 1}"#).unwrap();
    assert_eq!(kgq(&["train", "--config", s(&bad)]), 1);

    let broken = d.path().join("broken.tsv");
    fs::write(&broken, "only\ttwo\n").unwrap();
    assert_eq!(kgq(&["ingest", s(&broken), "--out", s(d.path())]), 3);

    // encodings that disagree with the stored model
    let enc_path = d.path().join("out/encodings.json");
    let mut enc: serde_json::Value = serde_json::from_slice(&fs::read(&enc_path).unwrap()).unwrap();
    enc["relations"] = json!(["http://example.org/kg#only"]);
    fs::write(&enc_path, serde_json::to_vec(&enc).unwrap()).unwrap();
    assert_eq!(kgq(&["infer", "--config", s(&cfg), "--targets", s(&q)]), 3);
}

fn dblp_config(dir: &Path, mock: &str) -> PathBuf {
    let cfg = dir.join("dblp.json");
    let v = json!({
        "task": "dblp-venue",
        "kind": "node-classification",
        "kg_name": "DBLP",
        "instruction": "predict the venue of a publication",
        "target_type": "schema:Publication",
        "predicate": "schema:publishedIn",
        "graph": "kg.tsv",
        "schema_stats": fixtures().join("schema_stats.tsv"),
        "template": "template.rq",
        "store_root": "stores",
        "out_dir": "out",
        "seed": 0,
        "mock_llm": fixtures().join(mock),
    });
    fs::write(&cfg, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    cfg
}

#[test]
fn gen_template_replays_fixtures() {
    let squash = |s: &str| s.split_whitespace().collect::<String>();
    let appendix = fs::read_to_string(fixtures().join("appendix_query.rq")).unwrap();
    let mut texts = Vec::new();
    for _ in 0..2 {
        let d = tempfile::tempdir().unwrap();
        let cfg = dblp_config(d.path(), "mock");
        assert_eq!(kgq(&["gen-template", "--config", s(&cfg)]), 0);
        let text = fs::read_to_string(d.path().join("template.rq")).unwrap();
        assert_eq!(squash(&text), squash(&appendix));
        assert!(d.path().join("template.rq.provenance.json").exists());
        texts.push(text);
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn hallucinated_template_exits_2_and_writes_nothing() {
    let d = tempfile::tempdir().unwrap();
    let cfg = dblp_config(d.path(), "mock_hallucinated");
    assert_eq!(kgq(&["gen-template", "--config", s(&cfg)]), 2);
    assert!(!d.path().join("template.rq").exists());
}

#[test]
fn missing_mock_fixture_is_transport_failure() {
    let d = tempfile::tempdir().unwrap();
    let empty = d.path().join("empty_mock");
    fs::create_dir(&empty).unwrap();
    let cfg = dblp_config(d.path(), "mock");
    assert_eq!(kgq(&["gen-template", "--config", s(&cfg), "--mock-llm", s(&empty)]), 4);
}
