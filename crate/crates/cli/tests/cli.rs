//! End-to-end tests of the command-line surface: exit codes, report text,
//! and the files each command leaves behind.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_markov-abstractions"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Flags that keep environment work tiny for pipeline smoke tests.
const TINY_GRID: &[&str] = &[
    "--grid-size",
    "3",
    "--obs-height",
    "7",
    "--obs-width",
    "6",
    "--dataset-steps",
    "400",
];

const TINY_DQN: &[&str] = &[
    "--episodes",
    "3",
    "--max-steps",
    "25",
    "--init-steps",
    "12",
    "--eps-decay",
    "40",
    "--replay-capacity",
    "200",
    "--batch-size",
    "8",
];

#[test]
fn verify_builtins_match_and_exit_zero() {
    for name in ["fig3", "fig6", "block:7"] {
        let output = run(&["verify", name]);
        assert!(output.status.success(), "{} failed: {:?}", name, output);
        let text = stdout(&output);
        assert_eq!(text.lines().count(), 6, "{}", text);
        for check in [
            "markov",
            "inverse",
            "density_ratio",
            "strong_ratio",
            "backward_ki",
            "forward_ki",
        ] {
            assert!(text.contains(check), "missing {} in:\n{}", check, text);
        }
        assert!(text.contains("max_violation="));
        assert!(!text.contains("MISMATCH"));
    }

    let fig3 = stdout(&run(&["verify", "fig3"]));
    assert!(fig3.contains("markov          holds=false"));
    assert!(fig3.contains("inverse         holds=true"));
    let fig6 = stdout(&run(&["verify", "fig6"]));
    assert!(fig6.contains("markov          holds=true"));
    assert!(fig6.contains("forward_ki      holds=false"));
}

#[test]
fn verify_reads_pair_documents_from_disk() {
    use markov_abstractions::check::builders::build_fig3_mdp;
    use markov_abstractions::mdp::text;

    let dir = tempfile::tempdir().unwrap();
    let (mdp, abstraction) = build_fig3_mdp();
    let path = dir.path().join("pair.txt");
    std::fs::write(
        &path,
        format!("{}{}", text::write_mdp(&mdp), text::write_abstraction(&abstraction)),
    )
    .unwrap();
    let output = run(&["verify", path.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(stdout(&output).contains("markov"));
}

#[test]
fn verify_rejects_missing_files_with_exit_two() {
    let output = run(&["verify", "/definitely/not/a/file"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_objectives_and_figures_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let output = run(&[
        "pretrain",
        "--objective",
        "nonsense",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));

    let output = run(&[
        "reproduce",
        "fig99",
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "1",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_checkpoints_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let output = run(&[
        "train",
        "--features",
        "checkpoint:/no/such/checkpoint.bin",
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn collect_pretrain_train_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("data.bin");

    let mut args = vec![
        "collect",
        "--steps",
        "400",
        "--seed",
        "3",
        "--out",
        dataset.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_GRID);
    let output = run(&args);
    assert!(output.status.success(), "{:?}", output);
    assert!(dataset.is_file());
    assert!(dir.path().join("data.bin.header.txt").is_file());
    assert!(dir.path().join("data.csv").is_file());

    // Pretrain from the collected dataset.
    let rep = dir.path().join("rep");
    let mut args = vec![
        "pretrain",
        "--objective",
        "markov",
        "--updates",
        "20",
        "--seed",
        "3",
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_GRID);
    args.extend_from_slice(&["--pretrain-batch-size", "64"]);
    let output = run(&args);
    assert!(output.status.success(), "{:?}", output);
    for file in ["checkpoint.bin", "loss.csv", "latents.csv"] {
        assert!(rep.join(file).is_file(), "missing {}", file);
    }

    // Train a frozen agent on that checkpoint.
    let train_dir = dir.path().join("train");
    let ckpt_arg = format!("checkpoint:{}", rep.join("checkpoint.bin").display());
    let mut args = vec![
        "train",
        "--features",
        &ckpt_arg,
        "--seeds",
        "2",
        "--out",
        train_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_GRID);
    args.extend_from_slice(TINY_DQN);
    let output = run(&args);
    assert!(output.status.success(), "{:?}", output);
    assert!(train_dir
        .join("agents/frozen_checkpoint/seed_000.csv")
        .is_file());
    assert!(train_dir
        .join("agents/frozen_checkpoint_summary.csv")
        .is_file());
}

#[test]
fn expert_training_writes_per_seed_and_summary_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let mut args = vec![
        "train",
        "--features",
        "expert",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_GRID);
    args.extend_from_slice(TINY_DQN);
    let output = run(&args);
    assert!(output.status.success(), "{:?}", output);
    for file in [
        "agents/expert_xy/seed_000.csv",
        "agents/expert_xy/seed_001.csv",
        "agents/expert_xy_summary.csv",
    ] {
        assert!(out.join(file).is_file(), "missing {}", file);
    }
    let seed_csv = std::fs::read_to_string(out.join("agents/expert_xy/seed_000.csv")).unwrap();
    assert!(seed_csv.lines().nth(2).unwrap() == "seed,episode,total_reward,epsilon_end");
    let summary = std::fs::read_to_string(out.join("agents/expert_xy_summary.csv")).unwrap();
    assert!(summary.contains("episode,mean_reward,smoothed_mean,ci95_lo,ci95_hi"));
}

#[test]
fn reproduce_fig9_writes_both_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("figs");
    let mut args = vec![
        "reproduce",
        "fig9",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_GRID);
    args.extend_from_slice(TINY_DQN);
    let output = run(&args);
    assert!(output.status.success(), "{:?}", output);
    assert!(out.join("fig9/summary_expert_xy.csv").is_file());
    assert!(out.join("fig9/summary_permuted_xy.csv").is_file());
    assert!(Path::new(&out).join("agents/permuted_xy/seed_001.csv").is_file());
}
