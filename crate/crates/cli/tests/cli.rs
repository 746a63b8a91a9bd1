//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vitmae"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

#[test]
fn calc_lr_prints_scaled_value() {
    let out = run(&["calc", "lr", "--base", "1.5e-4", "--batch", "4096"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "0.0024");
}

#[test]
fn calc_params_json_has_published_scale() {
    let out = run(&["calc", "params", "--recipe", "vit-e", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let params = v["params"].as_u64().unwrap();
    let rel = (params as f64 - 3_067_000_000.0).abs() / 3_067_000_000.0;
    assert!(rel < 0.015, "params {params}");
}

#[test]
fn calc_budget_reproduces_table_arithmetic() {
    let out = run(&["calc", "budget", "--n", "4191", "--epochs", "100", "--json"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["iterations_at_bs1"].as_u64().unwrap(), 419_100);
}

#[test]
fn errors_are_single_line_with_category() {
    let out = run(&["calc", "params", "--recipe", "vit-zz"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    let lines: Vec<&str> = err.trim().lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    assert!(lines[0].starts_with("error(config):"), "{err}");
}

#[test]
fn datagen_probe_eval_flow() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run(&[
        "datagen",
        "--kind",
        "classification",
        "--n",
        "24",
        "--size",
        "16",
        "--bands",
        "3",
        "--classes",
        "2",
        "--seed",
        "3",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(data.join("tiles").is_dir());
    assert!(data.join("labels.jsonl").exists());

    // random-init probe (fast smoke path)
    let probe_out = dir.path().join("probe");
    let out = run(&[
        "probe",
        "--random-init",
        "vit-tiny",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch",
        "8",
        "--seed",
        "1",
        "--out",
        probe_out.to_str().unwrap(),
    ]);
    // vit-tiny wants 4 bands; 3-band tiles must be rejected with a hint
    assert!(!out.status.success());
    assert!(stderr(&out).contains("band"), "{}", stderr(&out));

    // regenerate with 4 bands and retry
    let data4 = dir.path().join("data4");
    let out = run(&[
        "datagen",
        "--kind",
        "classification",
        "--n",
        "24",
        "--size",
        "32",
        "--bands",
        "4",
        "--classes",
        "2",
        "--seed",
        "3",
        "--out",
        data4.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "probe",
        "--random-init",
        "vit-tiny",
        "--data",
        data4.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch",
        "8",
        "--seed",
        "1",
        "--out",
        probe_out.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(probe_out.join("probe-head.orkt").exists());
    assert!(stdout(&out).contains("top-1 accuracy"));

    // eval with the trained head emits features + logits
    let eval_out = dir.path().join("eval");
    let ckpt = probe_out.join("probe-head.orkt");
    // backbone checkpoint: save a random-init encoder for the eval path
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data4.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    // the head checkpoint has no backbone tensors: must fail cleanly
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error("), "{}", stderr(&out));
}

#[test]
fn pretrain_resume_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "recipe": {"name": "nano", "width": 16, "depth": 2, "mlp": 32, "heads": 2,
                    "patch": 4, "bands": 3, "image": 16},
        "data": {"kind": "synthetic", "n": 24, "size": 16, "bands": 3},
        "seed": 9,
        "epochs": 2,
        "batch": 8,
        "out_dir": dir.path().join("full").to_str().unwrap(),
    });
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, serde_json::to_string(&config).unwrap()).unwrap();

    // uninterrupted
    let out = run(&["pretrain", "--config", cfg_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let reference = std::fs::read(dir.path().join("full/final.orkt")).unwrap();

    // interrupted + resumed into a different out dir
    let part = dir.path().join("part");
    let out = run(&[
        "pretrain",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        part.to_str().unwrap(),
        "--max-steps",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "pretrain",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        part.to_str().unwrap(),
        "--resume",
        part.join("final.orkt").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resumed = std::fs::read(part.join("final.orkt")).unwrap();
    assert_eq!(reference, resumed, "resume must be bit-exact");
}

#[test]
fn reshape_patch_rejects_indivisible_with_suggestion() {
    // build a small checkpoint via pretrain, then reshape to an invalid size
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "recipe": {"name": "nano", "width": 16, "depth": 1, "mlp": 32, "heads": 2,
                    "patch": 4, "bands": 3, "image": 16},
        "data": {"kind": "synthetic", "n": 16, "size": 16, "bands": 3},
        "seed": 1, "epochs": 1, "batch": 8,
        "out_dir": dir.path().join("run").to_str().unwrap(),
    });
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, serde_json::to_string(&config).unwrap()).unwrap();
    let out = run(&["pretrain", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = dir.path().join("run/final.orkt");

    // 512 is not divisible by 14: error names 504
    let out = run(&[
        "reshape-patch",
        "--input",
        ckpt.to_str().unwrap(),
        "--output",
        dir.path().join("x.orkt").to_str().unwrap(),
        "--patch",
        "14",
        "--image",
        "512",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("504"), "{}", stderr(&out));

    // patch 8 on image 16 works and rewrites geometry
    let out = run(&[
        "reshape-patch",
        "--input",
        ckpt.to_str().unwrap(),
        "--output",
        dir.path().join("p8.orkt").to_str().unwrap(),
        "--patch",
        "8",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn sample_manifest_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cat_dir = dir.path().join("cat");
    let out = run(&[
        "datagen", "--kind", "catalog", "--n", "120", "--seed", "5", "--out",
        cat_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = dir.path().join("manifest.jsonl");
    let out = run(&[
        "sample-manifest",
        "--catalog",
        cat_dir.join("catalog.jsonl").to_str().unwrap(),
        "--out",
        manifest.to_str().unwrap(),
        "--target-locations",
        "20",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let diag: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(diag["locations"].as_u64().unwrap(), 20);
    assert!(manifest.exists());
}
