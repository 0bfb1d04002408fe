use std::path::Path;
use std::process::{Command, Output};

use covrelax::trainer::{read_step_log, METRICS_HEADER, STEPLOG_HEADER};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covrelax")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["estimate", "--samples", "many"]), 1);
    let out = run(&["pretrain"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn score_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pred.txt"), "the cat sat .\nstorm hits\n").unwrap();
    std::fs::write(dir.path().join("ref.txt"), "the cat sat .\nstorm hits coast\n").unwrap();
    std::fs::write(
        dir.path().join("docs.jsonl"),
        "{\"documents\": [\"the cat sat .\", \"a dog ran\"]}\n{\"documents\": [\"storm hits coast\", \"storm hits\"]}\n",
    )
    .unwrap();
    let out = p(dir.path(), "out");
    let status = code(&[
        "score",
        "--pred",
        &p(dir.path(), "pred.txt"),
        "--ref",
        &p(dir.path(), "ref.txt"),
        "--docs",
        &p(dir.path(), "docs.jsonl"),
        "--system",
        "demo",
        "--out",
        &out,
    ]);
    assert_eq!(status, 0);
    let csv = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 3);
    // identical prediction and reference: every ROUGE is 1 and the coverage term vanishes
    assert!(lines[1].starts_with("demo,1,1,1,1,1,"), "{}", lines[1]);
    assert!(lines[2].starts_with("demo,2,"));
}

#[test]
fn score_rejects_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pred.txt"), "a\nb\n").unwrap();
    std::fs::write(dir.path().join("ref.txt"), "a\n").unwrap();
    std::fs::write(dir.path().join("docs.jsonl"), "{\"documents\": [\"a\"]}\n").unwrap();
    let status = code(&[
        "score",
        "--pred",
        &p(dir.path(), "pred.txt"),
        "--ref",
        &p(dir.path(), "ref.txt"),
        "--docs",
        &p(dir.path(), "docs.jsonl"),
        "--out",
        &p(dir.path(), "out"),
    ]);
    assert_eq!(status, 2);
}

#[test]
fn estimate_reports_every_coordinate() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "out");
    let status = code(&["estimate", "--oracle", "--samples", "500", "--cv-steps", "20", "--seed", "4", "--out", &out]);
    assert_eq!(status, 0);
    let csv = std::fs::read_to_string(dir.path().join("out/estimate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("estimator,coordinate,oracle,mean,variance,bias"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // V=3, d=2, h=3: 6 + 9 + 6 + 3 + 9 + 3 coordinates per estimator
    assert_eq!(rows.len(), 2 * 36);
    assert!(rows[..36].iter().all(|r| r[0] == "reinforce"));
    assert!(rows[36..].iter().all(|r| r[0] == "relax"));
    for r in &rows {
        let (oracle, mean, bias): (f64, f64, f64) =
            (r[2].parse().unwrap(), r[3].parse().unwrap(), r[5].parse().unwrap());
        assert!((mean - oracle - bias).abs() < 1e-12);
    }
}

#[test]
fn oversized_enumeration_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["estimate", "--oracle", "--vocab", "40", "--len", "4", "--out", &p(dir.path(), "out")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("enumeration budget"));
}

#[test]
fn bootstrap_reads_score_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "0.5\n0.4\n0.7\n0.2\n").unwrap();
    let a = p(dir.path(), "a.txt");
    assert_eq!(code(&["bootstrap", "--a", &a, "--b", &a, "--out", &p(dir.path(), "same")]), 0);
    let csv = std::fs::read_to_string(dir.path().join("same/bootstrap.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap().rsplit(',').next(), Some("1"));

    std::fs::write(dir.path().join("bad.txt"), "0.5\nnope\n").unwrap();
    let bad = p(dir.path(), "bad.txt");
    assert_eq!(code(&["bootstrap", "--a", &a, "--b", &bad, "--out", &p(dir.path(), "bad")]), 2);
}

#[test]
fn gen_corpus_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("x", "1"), ("y", "1"), ("z", "2")] {
        let out = p(dir.path(), name);
        assert_eq!(code(&["gen-corpus", "--records", "20", "--valid-records", "5", "--seed", seed, "--out", &out]), 0);
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("train.jsonl")).unwrap();
    assert_eq!(read("x"), read("y"));
    assert_ne!(read("x"), read("z"));
    let valid = std::fs::read_to_string(dir.path().join("x/valid.jsonl")).unwrap();
    assert_eq!(valid.lines().count(), 5);
}

#[test]
fn train_finetune_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["gen-corpus", "--records", "40", "--valid-records", "10", "--out", &p(dir.path(), "data")]), 0);
    std::fs::write(
        dir.path().join("config.toml"),
        "train_path = \"data/train.jsonl\"\nvalid_path = \"data/valid.jsonl\"\n\
         pretrain_epochs = 1\nfew_shot_steps = 30\nvalidate_every = 20\n",
    )
    .unwrap();
    let config = p(dir.path(), "config.toml");
    assert_eq!(code(&["pretrain", "--config", &config, "--out", &p(dir.path(), "pre")]), 0);
    for f in ["pretrain.ckpt.json", "pretrain_log.csv", "validation.csv"] {
        assert!(dir.path().join("pre").join(f).exists(), "{f}");
    }
    let ckpt = p(dir.path(), "pre/pretrain.ckpt.json");
    assert_eq!(code(&["finetune", "--config", &config, "--checkpoint", &ckpt, "--out", &p(dir.path(), "ft")]), 0);
    let log = std::fs::read_to_string(dir.path().join("ft/steplog.csv")).unwrap();
    assert!(log.starts_with(STEPLOG_HEADER));
    let rows = read_step_log(&log).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.log_tau.is_some() && r.cov_std.is_some()));

    let tuned = p(dir.path(), "ft/finetune.ckpt.json");
    let eval_out = p(dir.path(), "eval");
    assert_eq!(code(&["eval", "--config", &config, "--checkpoint", &tuned, "--system", "rl", "--out", &eval_out]), 0);
    let metrics = std::fs::read_to_string(dir.path().join("eval/eval_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 11);
    for f in ["eval_positions.csv", "eval_summary.csv"] {
        assert!(dir.path().join("eval").join(f).exists(), "{f}");
    }

    assert_eq!(code(&["finetune", "--config", &config, "--out", &p(dir.path(), "x")]), 1);
    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let broken = p(dir.path(), "broken.json");
    assert_eq!(code(&["finetune", "--config", &config, "--checkpoint", &broken, "--out", &p(dir.path(), "x")]), 2);
}

#[test]
fn unusable_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("train.jsonl"), "not json\n{\"documents\": []}\n").unwrap();
    std::fs::write(dir.path().join("config.toml"), "train_path = \"train.jsonl\"\nvalid_path = \"train.jsonl\"\n")
        .unwrap();
    let out = run(&["pretrain", "--config", &p(dir.path(), "config.toml"), "--out", &p(dir.path(), "o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid records"));

    std::fs::write(dir.path().join("bad.toml"), "learning_rate = 1\n").unwrap();
    assert_eq!(code(&["pretrain", "--config", &p(dir.path(), "bad.toml"), "--out", &p(dir.path(), "o")]), 1);
}
