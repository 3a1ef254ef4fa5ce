use std::path::Path;
use std::process::{Command, Output};

fn perfalign(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perfalign")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let help = perfalign(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["data", "train", "eval", "run", "config"] {
        assert!(text.contains(sub), "{text}");
    }
    assert_eq!(code(&perfalign(dir.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&perfalign(dir.path(), &[])), 1);
    assert_eq!(code(&perfalign(dir.path(), &["train", "ppo"])), 1);
    let bad = perfalign(dir.path(), &["config", "--set", "sft.epocs=2"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("epocs"));
    let bad = perfalign(dir.path(), &["config", "--config", "missing.toml"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("missing.toml"));
}

#[test]
fn config_prints_resolved_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "seed = 4\n[sft]\nepochs = 9\n").unwrap();
    let out = perfalign(dir.path(), &["-c", "c.toml", "--set", "sft.adam.lr=0.5", "--workers", "3", "config"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    for want in ["seed = 4", "workers = 3", "epochs = 9", "lr = 0.5"] {
        assert!(lines.contains(&want), "{want} not in\n{text}");
    }
}

#[test]
fn missing_prerequisite_exits_with_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = perfalign(dir.path(), &["--workdir", "w", "train", "dpa"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("train_sft/model.ckpt") && err.contains("run `train sft` first"), "{err}");
}

#[test]
fn toy_corpus_then_labeling() {
    let dir = tempfile::tempdir().unwrap();
    let out = perfalign(dir.path(), &["data", "toy", "--out", "toy.jsonl", "--problems", "12"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = perfalign(dir.path(), &["--set", "paths.corpus=toy.jsonl", "--workdir", "w", "data", "label"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("data label: "));
    assert!(dir.path().join("w/data_label/manifest.json").is_file());
    assert!(dir.path().join("w/data_label/corpus.jsonl").is_file());
}
