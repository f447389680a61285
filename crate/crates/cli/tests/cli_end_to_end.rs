use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_crisis");

/// Small encoder so end-to-end runs take seconds.
const TINY_CONFIG: &str = "vocab_size = 400\n\
[encoder]\nnum_layers = 1\nhidden_dim = 16\nnum_heads = 2\nffn_dim = 32\nmax_len = 24\n\
[train]\nepochs = 1\nlearning_rate = 0.001\nbatch_size = 16\n";

fn crisis(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CRISIS_OUT_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = crisis(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthetic_bundle(root: &Path, name: &str, classes: usize, per_class: usize) -> PathBuf {
    let dir = root.join(name);
    ok(&[
        "prepare",
        "--synthetic",
        "--synth-classes",
        &classes.to_string(),
        "--docs-per-class",
        &per_class.to_string(),
        "--static-table",
        "random:8",
        "--seed",
        "4",
        "--out-dir",
        p(&dir),
    ]);
    dir
}

fn write_config(root: &Path) -> PathBuf {
    let path = root.join("tiny.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

fn labeled_csv(root: &Path) -> PathBuf {
    let mut text = String::from("id,text,label\n");
    let events = ["2012_Sandy_Hurricane", "2013_Alberta_Floods", "off-topic"];
    for i in 0..90 {
        let label = events[i % 3];
        writeln!(text, "t{i},tweet number {i} about {},{label}", label.replace('_', " ")).unwrap();
    }
    let path = root.join("tweets.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn prepare_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let csv = labeled_csv(tmp.path());
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        ok(&["prepare", "--input", p(&csv), "--split", "80/10/10", "--seed", "2", "--out-dir", p(&dir)]);
        dir
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["corpus.tsv", "classes.txt", "split/train.idx", "split/val.idx", "split/test.idx"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let train = std::fs::read_to_string(a.join("split/train.idx")).unwrap();
    assert_eq!(train.lines().count(), 72);
}

#[test]
fn missing_label_column_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "id,text,category\n1,hello there,off-topic\n").unwrap();
    let out = crisis(&["prepare", "--input", p(&csv), "--out-dir", p(&tmp.path().join("b"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("label"), "{err}");
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let tmp = TempDir::new().unwrap();
    let bundle = synthetic_bundle(tmp.path(), "syn", 2, 30);
    let out = crisis(&["train", "--bundle", p(&bundle), "--model", "cnn", "--representation", "static-average"]);
    assert_eq!(out.status.code(), Some(2));
    let out = crisis(&["prepare", "--synthetic", "--split", "90/10", "--out-dir", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let missing = crisis(&["train", "--bundle", p(&tmp.path().join("nowhere")), "--out-dir", p(&tmp.path().join("y"))]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn train_eval_and_embed_round_trip() {
    let tmp = TempDir::new().unwrap();
    let bundle = synthetic_bundle(tmp.path(), "syn", 3, 40);
    let config = write_config(tmp.path());
    let run_dir = tmp.path().join("enc");
    ok(&["train", "--bundle", p(&bundle), "--config", p(&config), "--out-dir", p(&run_dir)]);
    let ckpt = run_dir.join("model.ckpt");
    assert!(ckpt.exists());
    assert!(run_dir.join("manifests/0001-train.json").exists());

    let eval = ok(&["eval", "--checkpoint", p(&ckpt), "--bundle", p(&bundle), "--out-dir", p(&tmp.path().join("ev"))]);
    assert!(eval.contains("macro_f1"), "{eval}");

    let tweets = tmp.path().join("tweets.txt");
    let body: String = (0..100).map(|i| format!("id{i}\tflood warning number {i} issued\n")).collect();
    std::fs::write(&tweets, body).unwrap();
    let vocab = run_dir.join("vocab.txt");
    let embed = |name: &str| {
        let out = tmp.path().join(name);
        ok(&["embed", "--checkpoint", p(&ckpt), "--vocab", p(&vocab), "--input", p(&tweets), "--output", p(&out)]);
        std::fs::read_to_string(out).unwrap()
    };
    let first = embed("a.txt");
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 101);
    assert!(lines[0].starts_with("# crisis2vec dim=16"));
    assert!(lines[1].starts_with("id0\t"));
    assert_eq!(lines[1].split('\t').nth(1).unwrap().split(' ').count(), 16);
    assert_eq!(first, embed("b.txt"));

    std::fs::write(&tweets, "fine tweet\n   \n").unwrap();
    let out = crisis(&["embed", "--checkpoint", p(&ckpt), "--vocab", p(&vocab), "--input", p(&tweets), "--output", p(&tmp.path().join("c.txt"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn grid_runs_every_cell_and_consolidates() {
    let tmp = TempDir::new().unwrap();
    let small = synthetic_bundle(tmp.path(), "small", 2, 40);
    let large = synthetic_bundle(tmp.path(), "large", 4, 30);
    let out = tmp.path().join("grid");
    let table = ok(&[
        "grid", "--bundle", p(&small), "--bundle", p(&large), "--model", "lr", "--model", "svm", "--model", "nb",
        "--out-dir", p(&out),
    ]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    let cells = json["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    assert!(cells.iter().all(|c| c["error"].is_null()), "{cells:?}");
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().next().unwrap().contains("recognition delta small->large"));

    let again = ok(&["grid", "--consolidate-only", "--out-dir", p(&out)]);
    assert_eq!(again, table);
    let manifests: Vec<_> = std::fs::read_dir(out.join("manifests")).unwrap().collect();
    assert_eq!(manifests.len(), 2);
}

#[test]
fn grid_without_models_fails_before_running() {
    let tmp = TempDir::new().unwrap();
    let bundle = synthetic_bundle(tmp.path(), "syn", 2, 30);
    let out = tmp.path().join("grid");
    let res = crisis(&["grid", "--bundle", p(&bundle), "--out-dir", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("at least one model"));
    assert!(!out.join("cells").exists());
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let status = Command::new(BIN)
        .args(["prepare", "--synthetic", "--synth-classes", "2", "--docs-per-class", "30"])
        .env("CRISIS_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(tmp.path().join("prepare/corpus.tsv").exists());
}
