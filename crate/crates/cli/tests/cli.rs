//! Exit codes, settings precedence and output files of the `skelnet` binary.

use std::path::Path;
use std::process::{Command, Output};

fn skelnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelnet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn conflicting_and_missing_inputs_are_usage_errors() {
    for args in [
        &["train", "--data", "x", "--synthetic"][..],
        &["train"],
        &["train", "--synthetic", "--model", "skeltnet", "--lr", "0.1"],
        &["train", "--synthetic", "--model", "skeltnet", "--loss", "sampling"],
        &["train", "--synthetic", "--model", "crnn", "--scheme", "whole"],
        &["train", "--synthetic", "--model", "baseline", "--scheme", "lr_three"],
        &["train", "--synthetic", "--skelnet-lr", "0.1"],
        &["train", "--synthetic", "--horizon-ms", "30"],
        &["eval", "--synthetic"],
        &["eval", "--synthetic", "--checkpoint", "/nonexistent/skelnet.ckpt"],
        &["ablate", "--synthetic", "--variants", "full,nonsense"],
    ] {
        let out = skelnet(args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "0,1,2\n0,1\n").unwrap();
    let out =
        skelnet(&["convert", "--input", path(&csv), "--output", path(&dir.path().join("o.seq")), "--activity", "a"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ungrouped_global_joint_needs_global_in_torso() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&skelnet(&["gen-synthetic", "--out", path(&data)])), 0);
    let text = std::fs::read_to_string(data.join("skeleton.skel")).unwrap();
    assert!(text.contains("torso root spine"));
    let skel = dir.path().join("ungrouped.skel");
    std::fs::write(&skel, text.replace("torso root spine", "torso spine")).unwrap();
    let count = |v: &str| skelnet(&["paramcount", "--synthetic", "--skeleton", path(&skel), "--global-in-torso", v]);
    let on = count("true");
    assert_eq!(code(&on), 0, "{}", String::from_utf8_lossy(&on.stderr));
    assert!(String::from_utf8_lossy(&on.stdout).contains("skelnet_five_part\t54\t103990"));
    let off = count("false");
    assert_eq!(code(&off), 3);
    assert!(String::from_utf8_lossy(&off.stderr).contains("`root` is not assigned"));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "[common]\nseed = 4\n[train]\niterations = 3\nbatch_size = 2\n[eval]\nwindows = 99\n")
        .unwrap();
    let out_dir = dir.path().join("out");
    let out = skelnet(&[
        "train",
        "--synthetic",
        "--config",
        path(&cfg),
        "--iterations",
        "2",
        "--horizon-ms",
        "200",
        "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ini = std::fs::read_to_string(out_dir.join("run_config.ini")).unwrap();
    assert!(ini.starts_with("[train]\n"));
    for line in ["iterations = 2", "batch-size = 2", "seed = 4", "scheme = five_part"] {
        assert!(ini.lines().any(|l| l == line), "missing `{line}` in\n{ini}");
    }
    assert!(!ini.contains("windows") && !ini.lines().any(|l| l.starts_with("out ") || l.starts_with("config ")));
    let log = std::fs::read_to_string(out_dir.join("skelnet.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3, "header plus two iterations");

    // The written file reproduces the run.
    let again = dir.path().join("again");
    let out =
        skelnet(&["train", "--synthetic", "--config", path(&out_dir.join("run_config.ini")), "--out", path(&again)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["skelnet.ckpt", "skelnet.log.jsonl", "run_config.ini"] {
        assert_eq!(std::fs::read(out_dir.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, "[train]\nlearning_rat = 0.1\n").unwrap();
    let out = skelnet(&["train", "--synthetic", "--config", path(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning-rat"));
}

#[test]
fn generated_dataset_trains_and_evaluates_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = skelnet(&["gen-synthetic", "--synthetic-count", "3", "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("skeleton.skel").is_file() && data.join("synthetic_spec.json").is_file());

    let run = dir.path().join("run");
    let out = skelnet(&[
        "train",
        "--data",
        path(&data),
        "--model",
        "crnn",
        "--iterations",
        "3",
        "--gru-units",
        "8",
        "--crnn-head",
        "8",
        "--horizon-ms",
        "200",
        "--checkpoint-every",
        "2",
        "--out",
        path(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("crnn.iter000002.ckpt").is_file() && run.join("crnn.ckpt").is_file());

    let eval = dir.path().join("eval");
    let ckpt = run.join("crnn.ckpt");
    let out = skelnet(&[
        "eval",
        "--data",
        path(&data),
        "--checkpoint",
        path(&ckpt),
        "--windows",
        "2",
        "--group-scheme",
        "five_part",
        "--out",
        path(&eval),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "skelnet-eval/1");
    assert_eq!(report["horizon_frames"], 5);
    assert!(report["activities"][0]["groups"].is_array());

    // A C-RNN has no partition to contradict; a SkelNet checkpoint does.
    let out = skelnet(&[
        "eval",
        "--data",
        path(&data),
        "--checkpoint",
        path(&ckpt),
        "--scheme",
        "whole",
        "--out",
        path(&eval),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = skelnet(&[
        "train",
        "--data",
        path(&data),
        "--iterations",
        "1",
        "--horizon-ms",
        "200",
        "--branch-dims",
        "8",
        "--out",
        path(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let skel = run.join("skelnet.ckpt");
    let out = skelnet(&[
        "eval",
        "--data",
        path(&data),
        "--checkpoint",
        path(&skel),
        "--scheme",
        "whole",
        "--out",
        path(&eval),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
