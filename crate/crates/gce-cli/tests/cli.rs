//! End-to-end tests of the installed binary: artifact layout, exit
//! codes, and bitwise reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gce(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gce"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_code(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

fn workspace_with_corpus() -> (TempDir, PathBuf) {
    let dir = TempDir::new().expect("tempdir");
    let corpus = dir.path().join("corpus.smi");
    std::fs::write(&corpus, "CCO\nCCN\nCC(C)O\nC1CCC1\nCC=O\nCCC\nCOC\nNCCO\n").unwrap();
    (dir, corpus)
}

const TINY: &[&str] = &["--set", "epochs=2", "--set", "hidden_channels=8", "--set", "num_layers=2"];

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn no_command_is_a_usage_error() {
    let (dir, _) = workspace_with_corpus();
    let out = gce(&[], dir.path());
    assert_code(&out, 2);
}

fn run_in_corpus_workspace(args: &[&str]) -> Output {
    let (dir, _) = workspace_with_corpus();
    gce(args, dir.path())
}

#[test]
fn unknown_config_keys_are_rejected() {
    let out = run_in_corpus_workspace(&["pretrain", "--data", "corpus.smi", "--out", "o", "--set", "foo=1"]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("unknown config key \"foo\""), "{}", stderr(&out));
}

#[test]
fn malformed_values_name_their_key() {
    let out = run_in_corpus_workspace(&["pretrain", "--data", "corpus.smi", "--out", "o", "--set", "lr=abc"]);
    assert_code(&out, 2);
    let err = stderr(&out);
    assert!(err.contains("\"lr\"") && err.contains("\"abc\""), "{err}");
}

#[test]
fn missing_input_paths_are_usage_errors() {
    let (dir, _) = workspace_with_corpus();
    let out = gce(&["generate", "--model", "absent.ckpt", "--seeds", "corpus.smi", "--out", "g"], dir.path());
    assert_code(&out, 2);
    assert!(stderr(&out).contains("absent.ckpt"), "{}", stderr(&out));
}

#[test]
fn pretrain_is_bitwise_reproducible() {
    let (dir, _) = workspace_with_corpus();
    for out_dir in ["a", "b"] {
        let mut args = vec!["pretrain", "--data", "corpus.smi", "--out", out_dir];
        args.extend_from_slice(TINY);
        assert_code(&gce(&args, dir.path()), 0);
    }
    for name in ["model.ckpt", "pretrain.csv", "manifest.json"] {
        assert_eq!(
            read(&dir.path().join("a").join(name)),
            read(&dir.path().join("b").join(name)),
            "{name} differs between identical runs"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("a/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "pretrain");
    assert_eq!(manifest["config"]["epochs"], "2");
    assert_eq!(manifest["inputs"]["data"], "corpus.smi");
    let csv = String::from_utf8(read(&dir.path().join("a/pretrain.csv"))).unwrap();
    assert!(csv.starts_with("epoch,loss\n1,"), "{csv}");
}

#[test]
fn resuming_matches_the_uninterrupted_run() {
    let (dir, _) = workspace_with_corpus();
    let run = |extra: &[&str]| {
        let mut args = vec!["pretrain", "--data", "corpus.smi"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--set", "hidden_channels=8", "--set", "num_layers=2"]);
        assert_code(&gce(&args, dir.path()), 0);
    };
    run(&["--out", "full", "--set", "epochs=4"]);
    run(&["--out", "half", "--set", "epochs=2"]);
    run(&["--out", "resumed", "--resume", "half/model.ckpt", "--set", "epochs=4"]);
    assert_eq!(
        read(&dir.path().join("full/model.ckpt")),
        read(&dir.path().join("resumed/model.ckpt")),
        "2+2 epochs must equal 4 straight epochs"
    );
}

#[test]
fn generation_artifacts_are_thread_count_independent() {
    let (dir, _) = workspace_with_corpus();
    let mut args = vec!["pretrain", "--data", "corpus.smi", "--out", "pre"];
    args.extend_from_slice(TINY);
    assert_code(&gce(&args, dir.path()), 0);

    for (out_dir, threads) in [("one", "1"), ("four", "4")] {
        let out = gce(
            &[
                "generate", "--model", "pre/model.ckpt", "--seeds", "corpus.smi", "--out", out_dir,
                "--set", "draws=2", "--set", "mask_rate=0.2", "--seed", "5", "--threads", threads,
            ],
            dir.path(),
        );
        assert_code(&out, 0);
    }
    for name in ["generated.smi", "provenance.json"] {
        assert_eq!(
            read(&dir.path().join("one").join(name)),
            read(&dir.path().join("four").join(name)),
            "{name} depends on the thread count"
        );
    }
    let prov: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("one/provenance.json"))).unwrap();
    // 8 seeds x 2 draws, each entry carrying its shot plans.
    assert_eq!(prov.as_array().unwrap().len(), 16);
    assert_eq!(prov[0]["plans"].as_array().unwrap().len(), 1);
}

#[test]
fn evaluating_a_set_against_itself_scores_one() {
    let (dir, _) = workspace_with_corpus();
    let out = gce(
        &["evaluate", "--generated", "corpus.smi", "--reference", "corpus.smi", "--out", "report"],
        dir.path(),
    );
    assert_code(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["kl_score"].as_f64().unwrap() >= 0.999);
    assert_eq!(report["validity"].as_f64().unwrap(), 1.0);
    assert_eq!(report["novelty"].as_f64().unwrap(), 0.0);

    let on_disk: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("report/report.json"))).unwrap();
    assert_eq!(on_disk, report);
    let csv = String::from_utf8(read(&dir.path().join("report/report.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("validity,uniqueness,novelty,kl_score,generated,valid,unique,novel"));
    assert!(lines.next().unwrap().starts_with("1.000000,1.000000,0.000000,"));
}

#[test]
fn evaluate_requires_a_comparison_set() {
    let out = run_in_corpus_workspace(&["evaluate", "--generated", "corpus.smi"]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("--training or --reference"), "{}", stderr(&out));
}

#[test]
fn finetune_reports_the_transfer() {
    let (dir, _) = workspace_with_corpus();
    let synth = "synth:cycles_vs_paths:20:4-8:1";
    let mut args = vec!["pretrain", "--data", synth, "--out", "pre"];
    args.extend_from_slice(TINY);
    assert_code(&gce(&args, dir.path()), 0);

    let out = gce(
        &[
            "finetune", "--data", synth, "--val", "synth:cycles_vs_paths:10:4-8:2",
            "--model", "pre/model.ckpt", "--out", "ft", "--set", "epochs=2",
        ],
        dir.path(),
    );
    assert_code(&out, 0);

    let transfer: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("ft/transfer.json"))).unwrap();
    let loaded: Vec<&str> =
        transfer["loaded"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(loaded.iter().any(|n| n.starts_with("node_in.")));
    assert!(loaded.iter().any(|n| n.starts_with("enc0.")));
    let initialized: Vec<&str> =
        transfer["initialized"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(initialized.iter().any(|n| n.starts_with("head.")));

    let csv = String::from_utf8(read(&dir.path().join("ft/finetune.csv"))).unwrap();
    assert!(csv.starts_with("epoch,loss,train_acc,val_acc\n"), "{csv}");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn runtime_failures_leave_a_marker_instead_of_a_manifest() {
    let (dir, _) = workspace_with_corpus();
    let mut args = vec!["pretrain", "--data", "synth:cycles_vs_paths:10:4-8:1", "--out", "pre"];
    args.extend_from_slice(TINY);
    assert_code(&gce(&args, dir.path()), 0);

    // Molecule features cannot feed an encoder pretrained on synthetic graphs.
    let out = gce(
        &["finetune", "--data", "corpus.smi", "--model", "pre/model.ckpt", "--out", "bad"],
        dir.path(),
    );
    assert_code(&out, 1);
    assert!(dir.path().join("bad/FAILED").exists());
    assert!(!dir.path().join("bad/manifest.json").exists());
    assert!(stderr(&out).contains("codec"), "{}", stderr(&out));
}

#[test]
fn reconstruct_prints_the_mask_and_both_molecules() {
    let (dir, _) = workspace_with_corpus();
    let mut args = vec!["pretrain", "--data", "corpus.smi", "--out", "pre"];
    args.extend_from_slice(TINY);
    assert_code(&gce(&args, dir.path()), 0);

    let out = gce(
        &["reconstruct", "--model", "pre/model.ckpt", "--smiles", "CCO", "--mask-rate", "0.1", "--seed", "3"],
        dir.path(),
    );
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("seed: CCO"), "{text}");
    assert!(text.contains("masked nodes: "), "{text}");
    assert!(text.contains("reconstructed: "), "{text}");

    // Same invocation, same output.
    let again = gce(
        &["reconstruct", "--model", "pre/model.ckpt", "--smiles", "CCO", "--mask-rate", "0.1", "--seed", "3"],
        dir.path(),
    );
    assert_eq!(stdout(&again), text);

    let bad = gce(&["reconstruct", "--model", "pre/model.ckpt", "--smiles", "C(("], dir.path());
    assert_code(&bad, 2);
}

#[test]
fn inspect_prints_metadata_and_tensor_statistics() {
    let (dir, _) = workspace_with_corpus();
    let mut args = vec!["pretrain", "--data", "corpus.smi", "--out", "pre"];
    args.extend_from_slice(TINY);
    assert_code(&gce(&args, dir.path()), 0);

    let out = gce(&["inspect", "--model", "pre/model.ckpt"], dir.path());
    assert_code(&out, 0);
    let text = stdout(&out);
    assert!(text.contains("epochs completed: 2"), "{text}");
    assert!(text.contains("classifier head: none"), "{text}");
    assert!(text.contains("node_in.w1"), "{text}");
    assert!(text.contains("enc0.theta.w1"), "{text}");
}

#[test]
fn config_files_layer_under_set_overrides() {
    let (dir, _) = workspace_with_corpus();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# tiny run\nepochs = 5\nhidden_channels = 8\nnum_layers = 2\n",
    )
    .unwrap();
    let out = gce(
        &["pretrain", "--data", "corpus.smi", "--out", "o", "--config", "run.cfg", "--set", "epochs=1"],
        dir.path(),
    );
    assert_code(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&dir.path().join("o/manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["epochs"], "1", "--set must override the file");
    assert_eq!(manifest["config"]["hidden_channels"], "8");
}
