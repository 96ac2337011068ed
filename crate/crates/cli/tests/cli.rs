use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multipatch::io::{decode_ppm, read_cameras, read_pfm};
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multipatch"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(d, &["--seed", "3", "gen", "--preset", "plane", "--views", "5", "--out", out]);
    }
    for f in ["cams.txt", "gt_depth.pfm", "spec.json", "images/00.pgm", "images/04.pgm"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    assert!(!d.join("a/images/05.pgm").exists());
    assert_eq!(read_cameras(d.join("a/cams.txt")).unwrap().len(), 5);
    let gt = read_pfm(d.join("a/gt_depth.pfm")).unwrap();
    assert!(gt.data.iter().filter(|&&z| z > 0.0).all(|&z| (0.45..=1.0).contains(&z)));
    let m = json(d.join("a/run_manifest.json"));
    assert_eq!(m["config"]["seed"], 3);
}

#[test]
fn plane_sweep_heatmap_is_blue() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--preset", "plane", "--out", "scene"]);
    ok(d, &["sweep", "--scene", "scene", "--measure", "zncc", "--planes", "64", "--out", "sweep"]);
    for f in ["depth.pfm", "conf.pfm", "points.ply", "run_manifest.json"] {
        assert!(d.join("sweep").join(f).exists(), "{f}");
    }
    let heat = decode_ppm(&fs::read(d.join("sweep/heatmap.ppm")).unwrap()).unwrap();
    let estimated: Vec<_> = heat
        .pixels
        .iter()
        .filter(|p| **p != [0, 0, 0] && **p != [128, 128, 128])
        .collect();
    assert!(estimated.len() > heat.pixels.len() / 2);
    assert!(estimated.iter().all(|p| p[0] == 0 && p[1] == 0), "non-blue error colour");
}

#[test]
fn eval_of_ground_truth_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--preset", "plane", "--out", "scene"]);
    let gt = "scene/gt_depth.pfm";
    ok(
        d,
        &[
            "eval", "--est", gt, "--est", gt, "--scene", "scene", "--scene", "scene", "--label", "a", "--label", "b",
            "--truncation", "5", "--heatmap", "--out", "ev",
        ],
    );
    let rows = json(d.join("ev/eval.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        for k in ["accuracy_mean", "accuracy_median", "completeness_mean", "completeness_median"] {
            assert_eq!(r[k], 0.0, "{k}");
        }
        assert_eq!(r["truncation_mm"], 5.0);
    }
    assert_eq!(rows[1]["label"], "b");
    assert_eq!(fs::read_to_string(d.join("ev/eval.csv")).unwrap().lines().count(), 3);
    assert!(d.join("ev/heatmap_1.ppm").exists());
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["gradcheck", "--out", "good"]), 0);
    assert_eq!(json(d.join("good/gradcheck.json"))["passed"], true);
    assert_eq!(code(d, &["gradcheck", "--corrupt", "1.05", "--out", "bad"]), 2);
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["sweep", "--scene", "missing", "--out", "o"]), 1);
    assert_eq!(code(d, &["train", "--batch-size", "3", "--out", "o"]), 1);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
    ok(d, &["gen", "--preset", "plane", "--out", "scene"]);
    assert_eq!(code(d, &["sweep", "--scene", "scene", "--measure", "learnedN", "--out", "o"]), 1);
    fs::write(d.join("bad.json"), r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(code(d, &["--config", "bad.json", "gen", "--out", "o"]), 1);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"sampling": {"generated_scenes": 2}}"#).unwrap();
    let train = |iterations: &str, out: &str, resume: bool| {
        let mut args = vec![
            "--config", "cfg.json", "--threads", "1", "train", "--iterations", iterations, "--batch-size", "8",
            "--head-width", "16", "--log-every", "2", "--out", out,
        ];
        if resume {
            args.push("--resume");
        }
        ok(d, &args);
    };
    train("6", "full", false);
    train("4", "split", false);
    train("6", "split", true);
    for f in ["weights.bin", "velocity.bin", "loss.csv"] {
        assert_eq!(fs::read(d.join("full").join(f)).unwrap(), fs::read(d.join("split").join(f)).unwrap(), "{f}");
    }
    assert_eq!(json(d.join("split/train_state.json"))["iteration"], 6);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.json"), r#"{"seed": 9, "views": 3}"#).unwrap();
    ok(d, &["--config", "cfg.json", "gen", "--preset", "plane", "--out", "from_file"]);
    let m = json(d.join("from_file/run_manifest.json"));
    assert_eq!((m["config"]["seed"].clone(), m["config"]["views"].clone()), (9.into(), 3.into()));
    ok(d, &["--config", "cfg.json", "--seed", "4", "gen", "--preset", "plane", "--views", "4", "--out", "flags"]);
    let m = json(d.join("flags/run_manifest.json"));
    assert_eq!((m["config"]["seed"].clone(), m["config"]["views"].clone()), (4.into(), 4.into()));
    assert!(d.join("flags/images/03.pgm").exists() && !d.join("flags/images/04.pgm").exists());
}
