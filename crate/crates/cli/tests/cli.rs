//! Command-line contract: help, exit codes, guards and reproducible artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 7] = ["split", "pretrain", "train", "eval", "uncertainty", "motifs", "synth"];

fn rawnp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawnp"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A synthetic graph plus a small config writing into `dir/out`.
fn workspace(dir: &Path) -> PathBuf {
    let graph = dir.join("graph.tsv");
    let out = rawnp(&["synth", "--out", graph.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let config = dir.join("run.conf");
    std::fs::write(
        &config,
        format!(
            "dataset = {}\noutput = {}\nseed = 1\nsplit.min_degree = 4\nsplit.max_degree = 40\n\
             split.train = 30\nsplit.valid = 10\nsplit.test = 10\nmodel.dim = 8\nmodel.hidden = 8\n\
             walk.walks = 3\nwalk.length = 4\npretrain.epochs = 3\ntrain.epochs = 1\ntrain.negatives = 4\n",
            graph.display(),
            dir.join("out").display()
        ),
    )
    .unwrap();
    config
}

#[test]
fn help_succeeds_for_every_subcommand() {
    assert_eq!(code(&rawnp(&["--help"])), 0);
    for sub in SUBCOMMANDS {
        let out = rawnp(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub} --help");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--config") && text.contains("--seed"), "{sub} help lacks global flags");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&rawnp(&["split", "--no-such-flag"])), 1);
    assert_eq!(code(&rawnp(&["frobnicate"])), 1);
    let out = rawnp(&["--set", "model.colour=red", "split"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("model.colour"));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.tsv");
    let out = rawnp(&["--set", &format!("dataset={}", missing.display()), "split"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("absent.tsv"));
}

#[test]
fn later_steps_name_their_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let c = config.to_str().unwrap();
    let out = rawnp(&["--config", c, "pretrain"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("rawnp split"), "{}", stderr(&out));
    assert_eq!(code(&rawnp(&["--config", c, "split"])), 0);
    let out = rawnp(&["--config", c, "train"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("rawnp pretrain"), "{}", stderr(&out));
}

#[test]
fn split_refuses_to_overwrite_without_force_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let c = config.to_str().unwrap();
    assert_eq!(code(&rawnp(&["--config", c, "split"])), 0);
    let artifact = dir.path().join("out/splits/split.json");
    let first = std::fs::read(&artifact).unwrap();
    assert!(first.starts_with(b"# config_hash="));

    let out = rawnp(&["--config", c, "split"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--force"));

    assert_eq!(code(&rawnp(&["--config", c, "split", "--force"])), 0);
    assert_eq!(std::fs::read(&artifact).unwrap(), first);

    assert_eq!(code(&rawnp(&["--config", c, "--seed", "2", "split", "--force"])), 0);
    assert_ne!(std::fs::read(&artifact).unwrap(), first);
}

#[test]
fn trained_pipeline_reports_metrics_and_rejects_bad_queries() {
    let dir = tempfile::tempdir().unwrap();
    let config = workspace(dir.path());
    let c = config.to_str().unwrap();
    for step in ["split", "pretrain", "train"] {
        let out = rawnp(&["--config", c, step]);
        assert_eq!(code(&out), 0, "{step}: {}", stderr(&out));
    }
    let out = rawnp(&["--config", c, "eval", "--mode", "raw"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics/eval-test-raw-all-full.csv")).unwrap();
    let mut lines = metrics.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert!(lines.next().unwrap().contains("mrr"));
    assert_eq!(lines.count(), 1);

    let out = rawnp(&["--config", c, "uncertainty", "--k-range", "3..1"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = rawnp(&["--config", c, "motifs", "no-such-entity"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no-such-entity"));
    let out = rawnp(&["--config", c, "motifs", "e3", "--top", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("source,rank,motif_codes,count"));
}
