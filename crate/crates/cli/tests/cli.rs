use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GOLDEN: &str = r#"{"id": "g", "instruction": "Turn to the right, go past the refrigerator. Turn left and walk to the point where you 're to the hallway by the entry and dining room area."}"#;

fn vln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vln")).args(args).output().expect("spawn vln")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn segment_golden_instruction() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    fs::write(&input, format!("{GOLDEN}\n")).unwrap();
    let o = vln(&["segment", "--input", p(&input), "--output", p(&output)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = fs::read_to_string(&output).unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(
        v["sub_instructions"],
        serde_json::json!([
            "Turn to the right",
            "go past the refrigerator",
            "Turn left",
            "and walk to the point where you 're to the hallway by the entry and dining room area"
        ])
    );
}

#[test]
fn empty_corpus_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    let output = dir.path().join("out.jsonl");
    fs::write(&input, "").unwrap();
    let o = vln(&["segment", "--input", p(&input), "--output", p(&output)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&output).unwrap(), "");
}

#[test]
fn missing_input_names_the_path() {
    let o = vln(&["segment", "--input", "/nonexistent/corpus.jsonl", "--output", "/tmp/never.jsonl"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/corpus.jsonl"), "{}", stderr(&o));
}

#[test]
fn stats_on_golden_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let hist = dir.path().join("hist.csv");
    fs::write(&input, format!("{GOLDEN}\n")).unwrap();
    let o = vln(&["stats", "--input", p(&input), "--hist-out", p(&hist)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("segment_ratio: 1.0000"), "{out}");
    assert!(out.contains("avg_sub_count: 4.0000"), "{out}");
    assert!(fs::read_to_string(&hist).unwrap().starts_with("sub_count,frequency"));

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert!(!vln(&["stats", "--input", p(&empty)]).status.success());
}

#[test]
fn gradcheck_passes_and_rejects_zero_cases() {
    let o = vln(&["gradcheck", "--seed", "3", "--cases", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!vln(&["gradcheck", "--cases", "0"]).status.success());
}

#[test]
fn run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("model.json");
    fs::write(
        &config,
        r#"{"feature_dim": 6, "hidden_dim": 8, "heads": 2, "action_embed_dim": 3, "action_count": 4}"#,
    )
    .unwrap();
    let trace = dir.path().join("trace.csv");
    let o = vln(&[
        "run", "--config", p(&config), "--seed", "1", "--subs", "2", "--steps", "5", "--mode", "teacher-forced",
        "--trace-out", p(&trace),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("step,action,x,y,heading,alpha_0,alpha_1\n"), "{text}");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn train_smoke_validates_curve_arguments() {
    let bad = vln(&["train-smoke", "--curve", "triangle", "--updates", "1"]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("triangle"), "{}", stderr(&bad));
    // every kind gets past the parser and fails on sigma instead
    for kind in ["gaussian", "constant", "linear", "quadratic", "cubic"] {
        let o = vln(&["train-smoke", "--curve", kind, "--sigma", "0", "--updates", "1"]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains("sigma must be positive"), "{kind}: {}", stderr(&o));
    }
}

#[test]
fn train_smoke_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let o = vln(&["train-smoke", "--seed", "0", "--updates", "300", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("update,loss_total,loss_action,loss_peak,loss_progress,lambda\n"));
    assert_eq!(text.lines().count(), 301);
}
