use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn mhnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhnn")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn run_ok(args: &[&str]) -> String {
    let out = mhnn(args);
    assert_eq!(code(&out), 0, "{args:?}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Hash of every file under `dir`, keyed by relative path.
fn tree_hashes(dir: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), hex);
            }
        }
    }
    out
}

const SMALL: &str = r#"
[dataset]
k = 2
min_prior_posts = 10

[synth.depression]
n_positive = 8
posts_per_user = 12
signal_rate = 0.3

[depression]
min_freq = 1

[depression.train]
epochs = 2

[synth.risk]
n_train = 40
n_test = 12

[risk]
input_dim = 16

[risk.train]
epochs = 2
"#;

fn workspace() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

#[test]
fn build_dataset_is_byte_identical_across_runs() {
    let (dir, cfg) = workspace();
    let raw = dir.path().join("raw");
    run_ok(&["synth", "raw", "--seed", "4", "--out", p(&raw)]);
    let mut hashes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let stdout = run_ok(&[
            "build-dataset", "--config", p(&cfg), "--seed", "9",
            "--corpus", p(&raw.join("posts.jsonl")),
            "--annotations", p(&raw.join("annotations.jsonl")),
            "--out", p(&out),
        ]);
        assert!(stdout.contains("diagnosed users            6"), "{stdout}");
        hashes.push(tree_hashes(&out));
    }
    assert!(hashes[0].len() >= 9);
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let (dir, cfg) = workspace();
    let data = dir.path().join("dep");
    run_ok(&["synth", "depression", "--config", p(&cfg), "--seed", "2", "--out", p(&data)]);
    let ck = |name: &str| {
        let out = dir.path().join(name);
        run_ok(&["train", "--config", p(&cfg), "--task", "depression", "--seed", "5", "--data", p(&data), "--out", p(&out), "--n-post", "12"]);
        std::fs::read(out.join("checkpoint.json")).unwrap()
    };
    assert_eq!(ck("a"), ck("b"));
}

#[test]
fn risk_training_evaluation_and_prediction() {
    let (dir, cfg) = workspace();
    let data = dir.path().join("risk");
    run_ok(&["synth", "risk", "--config", p(&cfg), "--seed", "1", "--out", p(&data)]);
    let run = dir.path().join("run");
    run_ok(&["train", "--config", p(&cfg), "--task", "risk", "--variant", "mse", "--seed", "3", "--data", p(&data), "--out", p(&run)]);
    assert_eq!(std::fs::read_to_string(run.join("epochs.jsonl")).unwrap().lines().count(), 4);
    let ck = run.join("checkpoint.json");
    let table = run_ok(&["evaluate", "--config", p(&cfg), "--checkpoint", p(&ck), "--data", p(&data), "--out", p(&dir.path().join("ev"))]);
    assert!(table.contains("Non-green"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["count"], 12);

    let pred = dir.path().join("pred");
    run_ok(&["predict", "--checkpoint", p(&ck), "--input", p(&data.join("test.jsonl")), "--out", p(&pred)]);
    assert_eq!(std::fs::read_to_string(pred.join("predictions.jsonl")).unwrap().lines().count(), 12);
}

#[test]
fn predict_on_empty_input_writes_empty_output() {
    let (dir, cfg) = workspace();
    let data = dir.path().join("dep");
    run_ok(&["synth", "depression", "--config", p(&cfg), "--seed", "2", "--out", p(&data)]);
    let run = dir.path().join("run");
    run_ok(&["train", "--config", p(&cfg), "--task", "depression", "--seed", "1", "--data", p(&data), "--out", p(&run), "--epochs", "1"]);
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("pred");
    run_ok(&["predict", "--checkpoint", p(&run.join("checkpoint.json")), "--input", p(&empty), "--out", p(&out)]);
    assert_eq!(std::fs::read(out.join("predictions.jsonl")).unwrap(), b"");
}

#[test]
fn evaluate_perfect_predictions_shows_ones() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("perfect.jsonl");
    let rows: String = ["green", "amber", "red", "crisis", "amber", "crisis"]
        .iter()
        .map(|l| format!("{{\"gold\":\"{l}\",\"pred\":\"{l}\"}}\n"))
        .collect();
    std::fs::write(&file, rows).unwrap();
    let table = run_ok(&["evaluate", "--predictions", p(&file), "--out", p(&dir.path().join("ev"))]);
    let summary = table.lines().nth(2).unwrap();
    let values: Vec<&str> = summary.split_whitespace().filter(|t| *t != "|").collect();
    assert_eq!(values, vec!["1.00"; 7], "{table}");
}

#[test]
fn gradcheck_default_seed_passes() {
    let dir = TempDir::new().unwrap();
    let table = run_ok(&["gradcheck", "--out", p(dir.path())]);
    assert!(!table.contains("FAIL"), "{table}");
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 17);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = p(dir.path());
    for args in [
        vec!["frobnicate"],
        vec!["train", "--task", "bogus", "--seed", "1", "--data", out, "--out", out],
        vec!["train", "--task", "risk", "--seed", "1", "--data", out, "--out", out],
        vec!["train", "--task", "depression", "--variant", "mse", "--seed", "1", "--data", out, "--out", out],
        vec!["train", "--task", "depression", "--data", out, "--out", out],
        vec!["synth", "depression", "--out", out],
        vec!["evaluate", "--out", out],
        vec!["train", "--task", "depression", "--seed", "x", "--data", out, "--out", out],
        vec!["train", "--task", "depression", "--seed", "1", "--data", out, "--out", out, "--strategy", "sideways"],
    ] {
        let res = mhnn(&args);
        assert_eq!(code(&res), 2, "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
}

#[test]
fn runtime_failures_exit_with_one() {
    let (dir, cfg) = workspace();
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.json");
    let res = mhnn(&["evaluate", "--checkpoint", p(&missing), "--data", p(dir.path()), "--out", p(&out)]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing.json"));

    let posts = dir.path().join("posts.jsonl");
    let bad = "{\"post_id\":\"p1\",\"user_id\":\"u\",\"community\":\"a\",\"timestamp\":1,\"text\":\"hi\"}\nnot json\n";
    std::fs::write(&posts, bad).unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(&ann, "").unwrap();
    let res = mhnn(&["build-dataset", "--config", p(&cfg), "--seed", "1", "--corpus", p(&posts), "--annotations", p(&ann), "--out", p(&out)]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains(":2:"), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn empty_control_pool_is_reported() {
    let (dir, cfg) = workspace();
    let posts = dir.path().join("posts.jsonl");
    let rows: String = (0..4)
        .map(|i| format!("{{\"post_id\":\"p{i}\",\"user_id\":\"u{i}\",\"community\":\"depression\",\"timestamp\":{i},\"text\":\"rough week\"}}\n"))
        .collect();
    std::fs::write(&posts, rows).unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(&ann, "").unwrap();
    let res = mhnn(&["build-dataset", "--config", p(&cfg), "--seed", "1", "--corpus", p(&posts), "--annotations", p(&ann), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("control pool is empty"));
}

#[test]
fn explain_lists_phrases_for_diagnosed_users() {
    let (dir, cfg) = workspace();
    let data = dir.path().join("dep");
    run_ok(&["synth", "depression", "--config", p(&cfg), "--seed", "2", "--out", p(&data)]);
    let run = dir.path().join("run");
    run_ok(&["train", "--config", p(&cfg), "--task", "depression", "--seed", "1", "--data", p(&data), "--out", p(&run)]);
    let ex = dir.path().join("ex");
    run_ok(&["explain", "--checkpoint", p(&run.join("checkpoint.json")), "--data", p(&data), "--m", "2", "--out", p(&ex)]);
    let phrases: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ex.join("phrases.json")).unwrap()).unwrap();
    let phrases = phrases.as_array().unwrap();
    assert!(!phrases.is_empty() && phrases.len() <= 2);
    assert_eq!(phrases[0]["window"].as_str().unwrap().split(' ').count(), 3);
}
