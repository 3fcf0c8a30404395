//! The `hgmlm` binary end to end: subcommands, exit codes and idempotence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 8] = ["ingest", "corpus", "vocab", "train", "adapt", "eval", "attention", "run"];

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn hgmlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgmlm"))
        .args(args)
        .env("HGMLM_THREADS", "2")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = hgmlm(args);
    assert_eq!(code(&out), 0, "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_settings(dir: &Path) -> PathBuf {
    let path = dir.join("settings.toml");
    fs::write(
        &path,
        "[model]\nmax_len = 96\nlayers = 1\nheads = 2\ndim = 16\nffn = 32\ndropout = 0.0\n\n\
         [train]\nlr = 1e-3\nepochs = 2\nbatch_size = 16\n\n[adapt]\nlr = 3e-4\nepochs = 2\nbatch_size = 4\n",
    )
    .unwrap();
    path
}

#[test]
fn help_exits_zero_everywhere() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in SUBCOMMANDS {
        assert!(text.contains(sub), "{sub} missing from help");
        let out = ok(&[sub, "--help"]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    ok(&["--version"]);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&hgmlm(&[])), 1);
    assert_eq!(code(&hgmlm(&["frobnicate"])), 1);
    assert_eq!(code(&hgmlm(&["corpus", "--graph", "g.bin", "--out", "c.jsonl", "--bogus"])), 1);
    assert_eq!(code(&hgmlm(&["corpus", "--graph", "g.bin", "--out", "c.jsonl", "--tasks", "nc,xx"])), 1);
    assert_eq!(code(&hgmlm(&["corpus", "--graph", "g.bin", "--out", "c.jsonl", "--mode", "words"])), 1);
    assert_eq!(code(&hgmlm(&["adapt", "--model", "m.bin"])), 1);
}

#[test]
fn thread_cap_must_be_positive() {
    let out = Command::new(env!("CARGO_BIN_EXE_hgmlm"))
        .args(["vocab", "--corpus", "nope.jsonl", "--out", "v.tsv"])
        .env("HGMLM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("HGMLM_THREADS"));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = hgmlm(&["ingest", "--bundle", "/no/such/bundle.toml", "--out", s(&dir.path().join("g.bin"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    assert_eq!(code(&hgmlm(&["vocab", "--corpus", s(&bad), "--out", s(&dir.path().join("v.tsv"))])), 2);
}

/// Runs ingest, corpus, vocab, train, adapt, eval and attention into `dir`.
fn staged_pipeline(dir: &Path) {
    let settings = write_settings(dir);
    let p = |name: &str| dir.join(name);
    ok(&[
        "ingest",
        "--bundle",
        s(&fixtures().join("synthetic/source/bundle.toml")),
        "--out",
        s(&p("source.bin")),
        "--gml",
        s(&p("source.gml")),
        "--graphml",
        s(&p("source.graphml")),
    ]);
    ok(&["ingest", "--bundle", s(&fixtures().join("synthetic/target/bundle.toml")), "--out", s(&p("target.bin"))]);
    ok(&["corpus", "--graph", s(&p("source.bin")), "--out", s(&p("source.jsonl")), "--k", "2", "--seed", "4"]);
    ok(&["corpus", "--graph", s(&p("target.bin")), "--out", s(&p("target.jsonl")), "--k", "2", "--seed", "4"]);
    ok(&["vocab", "--corpus", s(&p("source.jsonl")), s(&p("target.jsonl")), "--out", s(&p("vocab.tsv"))]);
    ok(&[
        "train",
        "--config",
        s(&settings),
        "--seed",
        "1",
        "--corpus",
        s(&p("source.jsonl")),
        "--vocab",
        s(&p("vocab.tsv")),
        "--out",
        s(&p("model.bin")),
    ]);
    ok(&[
        "adapt",
        "--config",
        s(&settings),
        "--seed",
        "1",
        "--model",
        s(&p("model.bin")),
        "--vocab",
        s(&p("vocab.tsv")),
        "--corpus",
        s(&p("target.jsonl")),
        "--shots",
        "1",
        "--out",
        s(&p("adapted.bin")),
        "--shots-out",
        s(&p("shots.json")),
    ]);
    ok(&[
        "eval",
        "--model",
        s(&p("adapted.bin")),
        "--vocab",
        s(&p("vocab.tsv")),
        "--corpus",
        s(&p("target.jsonl")),
        "--exclude",
        s(&p("shots.json")),
        "--metrics",
        "f1,auc",
        "--out",
        s(&p("scores.json")),
    ]);
    let first = fs::read_to_string(p("target.jsonl")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    ok(&[
        "attention",
        "--model",
        s(&p("adapted.bin")),
        "--vocab",
        s(&p("vocab.tsv")),
        "--corpus",
        s(&p("target.jsonl")),
        "--entry",
        entry["entry_id"].as_str().unwrap(),
        "-o",
        s(&p("att.json")),
    ]);
}

const STAGED_OUTPUTS: [&str; 15] = [
    "source.bin",
    "source.gml",
    "source.graphml",
    "target.bin",
    "source.jsonl",
    "target.jsonl",
    "vocab.tsv",
    "model.bin",
    "model.toml",
    "adapted.bin",
    "adapted.toml",
    "shots.json",
    "scores.json",
    "att.json",
    "settings.toml",
];

#[test]
fn staged_subcommands_are_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    staged_pipeline(a.path());
    staged_pipeline(b.path());
    for f in STAGED_OUTPUTS {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
    let shots: Vec<String> = serde_json::from_slice(&fs::read(a.path().join("shots.json")).unwrap()).unwrap();
    assert_eq!(shots.len(), 6, "one shot per class for nc and lp");
    let scores: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("scores.json")).unwrap()).unwrap();
    assert!(scores["lp"]["auc"].is_number());
    assert!(scores["nc"]["micro_f1"].is_number());
    let att: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("att.json")).unwrap()).unwrap();
    let total: f64 = att["tokens"].as_array().unwrap().iter().map(|t| t["score"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn resolved_config_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "corpus",
        "--graph",
        s(&fixtures().join("imdb-mini/bundle.toml")),
        "--out",
        s(&dir.path().join("c.jsonl")),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("# resolved config for `corpus`"));
    // three instances per metapath unless told otherwise
    assert!(err.contains("k = 3"), "{err}");
    assert!(err.contains("tasks = [\"nc\", \"lp\"]"));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("resolved"));
}

#[test]
fn flat_format_flag_switches_the_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.jsonl");
    ok(&[
        "corpus",
        "--graph",
        s(&fixtures().join("imdb-mini/bundle.toml")),
        "--out",
        s(&out),
        "--format",
        "flat",
        "--tasks",
        "nc",
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("node 0 {label: I Spy, type: movie}"));
}

#[test]
fn run_rejects_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let settings = write_settings(dir.path());
    let plan = fixtures().join("synthetic/plan.toml");
    let out = hgmlm(&["run", "--plan", s(&plan), "--out", s(&dir.path().join("o")), "--config", s(&settings)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn non_finite_weights_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    staged_pipeline(dir.path());
    let path = dir.path().join("adapted.bin");
    let mut checkpoint = hgmlm::model::load_checkpoint::<f32>(&path).unwrap();
    for t in &mut checkpoint.model.params.tensors {
        t.fill(f32::NAN);
    }
    let broken = dir.path().join("broken.bin");
    hgmlm::model::save_checkpoint(&broken, &checkpoint).unwrap();
    let out = hgmlm(&[
        "eval",
        "--model",
        s(&broken),
        "--vocab",
        s(&dir.path().join("vocab.tsv")),
        "--corpus",
        s(&dir.path().join("target.jsonl")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
