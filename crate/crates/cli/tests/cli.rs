use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn kgsel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgsel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn kgsel")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = kgsel(dir, args);
    assert!(
        out.status.success(),
        "kgsel {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// synth -> train all -> run -> evaluate end2end in `dir`.
fn full_run(dir: &Path) -> Value {
    ok(dir, &["synth", "--out", "data"]);
    ok(dir, &["--data", "data", "--models", "m", "train", "all"]);
    ok(dir, &["--data", "data", "--models", "m", "--outputs", "o", "run"]);
    ok(dir, &["--data", "data", "--outputs", "o", "evaluate", "end2end", "--predictions", "o/predictions.json"]);
    read_json(dir.join("o/report_end2end.json"))
}

fn refs(v: &Value) -> Vec<String> {
    v.get("knowledge")
        .and_then(Value::as_array)
        .map(|ks| ks.iter().map(|k| k.to_string()).collect())
        .unwrap_or_default()
}

/// Recount detection and selection figures straight from the files.
fn recount(preds: &Value, golds: &Value) -> (u64, u64, u64, u64, f64, f64, f64) {
    let (mut tp, mut fp, mut fnn, mut tn) = (0, 0, 0, 0);
    let (mut mrr, mut r1, mut r5, mut n) = (0.0, 0.0, 0.0, 0.0);
    for (p, g) in preds.as_array().unwrap().iter().zip(golds.as_array().unwrap()) {
        let (pt, gt) = (p["target"].as_bool().unwrap(), g["target"].as_bool().unwrap());
        match (pt, gt) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => tn += 1,
        }
        if gt {
            n += 1.0;
            let gold = refs(g);
            let rank = refs(p).iter().take(5).position(|r| gold.contains(r));
            if let Some(k) = rank {
                mrr += 1.0 / (k + 1) as f64;
                r5 += 1.0;
                if k == 0 {
                    r1 += 1.0;
                }
            }
        }
    }
    (tp, fp, fnn, tn, mrr / n, r1 / n, r5 / n)
}

fn assert_close_json(got: &Value, want: &Value, path: &str) {
    match (got, want) {
        (Value::Object(a), Value::Object(b)) => {
            let mut ka: Vec<_> = a.keys().collect();
            let mut kb: Vec<_> = b.keys().collect();
            ka.sort();
            kb.sort();
            assert_eq!(ka, kb, "keys differ at {path}");
            for k in ka {
                assert_close_json(&a[k], &b[k], &format!("{path}.{k}"));
            }
        }
        (Value::Number(x), Value::Number(y)) if x.is_f64() || y.is_f64() => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9, "{path}: {x} vs golden {y}");
        }
        _ => assert_eq!(got, want, "at {path}"),
    }
}

#[test]
fn synthetic_run_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = full_run(dir.path());

    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report_end2end.json");
    // Set KGSEL_BLESS=1 to rewrite the golden file after an intended change.
    if std::env::var_os("KGSEL_BLESS").is_some() {
        std::fs::write(&golden_path, serde_json::to_string_pretty(&report).unwrap() + "\n").unwrap();
    }
    assert_close_json(&report, &read_json(&golden_path), "report");

    let preds = read_json(dir.path().join("o/predictions.json"));
    let golds = read_json(dir.path().join("data/test/labels.json"));
    let (tp, fp, fnn, tn, mrr, r1, r5) = recount(&preds, &golds);
    let d = &report["detection"];
    assert_eq!([d["tp"].as_u64(), d["fp"].as_u64(), d["fn"].as_u64(), d["tn"].as_u64()], [Some(tp), Some(fp), Some(fnn), Some(tn)]);
    let s = &report["selection"];
    assert!((s["mrr_at_5"].as_f64().unwrap() - mrr).abs() < 1e-12);
    assert!((s["recall_at_1"].as_f64().unwrap() - r1).abs() < 1e-12);
    assert!((s["recall_at_5"].as_f64().unwrap() - r5).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_run(a.path());
    ok(b.path(), &["synth", "--out", "data"]);
    ok(b.path(), &["--data", "data", "--models", "m", "train", "all"]);
    ok(b.path(), &["--data", "data", "--models", "m", "--outputs", "o", "run", "--workers", "1"]);
    for f in ["m/detector.kgsm", "m/domain.kgsm", "m/ranker.kgsm", "o/predictions.json"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn misaligned_predictions_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("preds.json"), r#"[{"target": false}]"#).unwrap();
    std::fs::write(p.join("labels.json"), r#"[{"target": false}, {"target": false}]"#).unwrap();
    let out = kgsel(p, &["evaluate", "detection", "--predictions", "preds.json", "--labels", "labels.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn identical_score_files_give_null_t_test() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("a.json"), "[0.2, 0.5, 0.9, 0.1]").unwrap();
    std::fs::write(p.join("b.txt"), "0.2 0.5\n0.9 0.1\n").unwrap();
    let stdout = ok(p, &["ttest", "a.json", "b.txt"]);
    assert_eq!(stdout.trim(), "t=0 p=1 n=4");
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(kgsel(p, &["--data", "nowhere", "kb", "stats"]).status.code(), Some(2));
    assert_eq!(kgsel(p, &["kb", "stats"]).status.code(), Some(2));
    assert_eq!(kgsel(p, &["--data", "nowhere", "run"]).status.code(), Some(2));
}

#[test]
fn malformed_knowledge_base_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("kb.json"), r#"{"hotel": {"1": {"name": "A", "docs": {"0": {"title": "q"}}}}}"#).unwrap();
    let out = kgsel(p, &["--kb", "kb.json", "kb", "validate"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(p.join("kb.json"), "{not json").unwrap();
    assert_eq!(kgsel(p, &["--kb", "kb.json", "kb", "stats"]).status.code(), Some(2));
}

#[test]
fn empty_knowledge_base_has_zero_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("kb.json"), "{}").unwrap();
    ok(p, &["--kb", "kb.json", "kb", "stats", "--json", "stats.json"]);
    let stats = read_json(p.join("stats.json"));
    assert_eq!(stats["total_entities"], 0);
    assert_eq!(stats["total_snippets"], 0);
}

fn write_split(dir: &Path, split: &str, rows: &[(&str, bool)]) {
    let d = dir.join(split);
    std::fs::create_dir_all(&d).unwrap();
    let logs: Vec<Value> = rows.iter().map(|(u, _)| json!([{"speaker": "U", "text": u}])).collect();
    let labels: Vec<Value> = rows
        .iter()
        .map(|(_, k)| {
            if *k {
                json!({"target": true, "knowledge": [{"domain": "hotel", "entity_id": 1, "doc_id": 0}], "response": "Yes."})
            } else {
                json!({"target": false})
            }
        })
        .collect();
    std::fs::write(d.join("logs.json"), serde_json::to_string(&logs).unwrap()).unwrap();
    std::fs::write(d.join("labels.json"), serde_json::to_string(&labels).unwrap()).unwrap();
}

#[test]
fn separable_toy_detector_fits_training_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    std::fs::create_dir_all(&data).unwrap();
    let kb = json!({"hotel": {"1": {"name": "Acorn Guest House", "docs": {
        "0": {"title": "Is there wifi?", "body": "Yes."},
        "1": {"title": "Can I bring my dog?", "body": "No."}
    }}}});
    std::fs::write(data.join("knowledge.json"), kb.to_string()).unwrap();
    let rows = [
        ("is there wifi at the hotel", true),
        ("can i bring my dog", true),
        ("is there wifi in the rooms", true),
        ("book a taxi for two", false),
        ("book a table for four", false),
        ("book a room for tonight", false),
    ];
    write_split(&data, "train", &rows);
    write_split(&data, "val", &rows);
    let stdout = ok(dir.path(), &["--data", "toy", "--models", "m", "train", "detector"]);
    assert!(stdout.contains("train accuracy 1.0000"), "{stdout}");
    assert!(dir.path().join("m/detector.kgsm").exists());
}
