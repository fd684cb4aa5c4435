use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use senti_core::synth;

fn senti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_senti")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_inputs(dir: &Path) {
    let bench = synth::benchmark(&synth::BenchmarkConfig {
        corpus_sentences: 120,
        heldout_sentences: 0,
        labeled: 40,
        ..Default::default()
    });
    fs::write(dir.join("corpus.txt"), bench.corpus.join("\n")).unwrap();
    fs::write(dir.join("train.tsv"), synth::classification_tsv(&bench.train)).unwrap();
    fs::write(dir.join("dev.tsv"), synth::classification_tsv(&bench.dev)).unwrap();
    fs::write(
        dir.join("small.config"),
        "# tiny model\nhidden_dim = 16\nffn_dim = 32\nmax_seq_len = 24\nepochs = 1\nft_epochs = 1\nlr = 0.001\n",
    )
    .unwrap();
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(senti(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = senti(&[
        "mine",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--set",
        "hiden_dim=4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("hiden_dim"));
}

#[test]
fn missing_upstream_artifact_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = senti(&["pretrain", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("senti mine"), "{}", stderr(&out));
}

#[test]
fn selftest_passes_and_rejects_corrupt_checkpoint() {
    let out = senti(&["selftest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"definitely not a checkpoint").unwrap();
    let out = senti(&["selftest", "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("checkpoint"));
}

#[test]
fn stages_run_end_to_end_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let d = |f: &str| dir.path().join(f).display().to_string();
    let out_dir = d("out");
    let config = d("small.config");
    let common = [
        "--out-dir",
        out_dir.as_str(),
        "--config",
        config.as_str(),
        "--seed",
        "3",
    ];
    let run = |args: &[&str]| {
        let mut all = args.to_vec();
        all.extend_from_slice(&common);
        let out = senti(&all);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    };
    run(&["mine", "--corpus", &d("corpus.txt")]);
    run(&["mask", "--corpus", &d("corpus.txt")]);
    run(&["pretrain"]);
    run(&["finetune", "--train", &d("train.tsv"), "--dev", &d("dev.tsv")]);
    run(&["eval", "--data", &d("dev.tsv"), "--dump-attention"]);

    let out = dir.path().join("out");
    for f in [
        "lexicon.tsv",
        "pairs.tsv",
        "masked.jsonl",
        "encoder.ckpt",
        "finetuned.ckpt",
        "results.json",
        "predictions.tsv",
        "attention.tsv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let recorded = fs::read_to_string(out.join("pretrain.config")).unwrap();
    assert!(recorded.contains("seed = 3"));
    assert!(recorded.contains("hidden_dim = 16"));

    let ckpt = out.join("encoder.ckpt").display().to_string();
    assert!(senti(&["selftest", "--checkpoint", &ckpt]).status.success());
}

#[test]
fn mismatched_objectives_between_mask_and_pretrain_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let d = |f: &str| dir.path().join(f).display().to_string();
    let out_dir = d("out");
    let common = ["--out-dir", out_dir.as_str(), "--config", &d("small.config")].map(String::from);
    let go = |args: &[&str]| {
        let mut all: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        all.extend(common.iter().cloned());
        Command::new(env!("CARGO_BIN_EXE_senti")).args(&all).output().unwrap()
    };
    assert!(go(&["mine", "--corpus", &d("corpus.txt")]).status.success());
    assert!(go(&["mask", "--corpus", &d("corpus.txt"), "--objectives", "random"])
        .status
        .success());
    let out = go(&["pretrain", "--objectives", "sw,wp,ap"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--objectives"));
}
