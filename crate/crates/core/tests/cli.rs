use std::path::Path;
use std::process::{Command, Output};

use aagan::io::{checkpoint, netpbm};
use aagan::model::{build_discriminator, build_generator, Network, DEFAULT_IMAGE};

fn aagan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aagan"))
        .args(args)
        .current_dir(dir)
        .env_remove("AA_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn summary_mentions_paper_totals() {
    let dir = tempfile::tempdir().unwrap();
    let o = aagan(dir.path(), &["summary", "--model", "discriminator"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("Total params: 522,497"));
    let c = stdout(&aagan(dir.path(), &["summary", "--model", "composite"]));
    assert!(c.ends_with("Non-trainable params: 522,497\n"));
}

#[test]
fn usage_errors_exit_2_and_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aagan(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(aagan(dir.path(), &["summary", "--bogus"]).status.code(), Some(2));
    assert_eq!(aagan(dir.path(), &["summary", "--model", "nope"]).status.code(), Some(2));
    let o = aagan(dir.path(), &["eval", "--scores", "missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    std::fs::write(dir.path().join("bad.cfg"), "[train]\nstepz = 3\n").unwrap();
    let o = aagan(dir.path(), &["--config", "bad.cfg", "summary"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn eval_four_point_case() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "id,label,score\na,0,0.1\nb,0,0.4\nc,1,0.35\nd,1,0.8\n").unwrap();
    let o = aagan(dir.path(), &["eval", "--scores", "s.csv", "--threshold", "0.37", "--out", "m.csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().next() == Some("auc=0.75"), "{text}");
    assert!(text.contains("precision=0.5") && text.contains("recall=0.5"));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv, "auc,threshold,precision,recall,f1,tp,fp,tn,fn\n0.75,0.37,0.5,0.5,0.5,1,1,1,1\n");
}

#[test]
fn generate_from_zero_weights_is_gray() {
    let dir = tempfile::tempdir().unwrap();
    let g = Network::zeros(build_generator(100, DEFAULT_IMAGE, 1.0).unwrap()).unwrap();
    let d = Network::zeros(build_discriminator(DEFAULT_IMAGE, 1.0).unwrap()).unwrap();
    checkpoint::write_checkpoint(&dir.path().join("zero.ckpt"), &g, &d).unwrap();
    let o = aagan(dir.path(), &["generate", "--checkpoint", "zero.ckpt", "--count", "6", "--cols", "3", "--out", "g.ppm"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = netpbm::read_image(&dir.path().join("g.ppm")).unwrap();
    assert_eq!(img.shape(), [64, 96, 3]);
    assert!(img.pixels.iter().all(|&p| p == 128));
}

#[test]
fn seed_flag_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, env: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_aagan"));
        c.args(["datagen", "--n", "6", "--anomaly-rate", "0.5", "--seed", seed, "--out", out]).current_dir(dir.path());
        match env {
            Some(v) => c.env("AA_SEED", v),
            None => c.env_remove("AA_SEED"),
        };
        assert!(c.output().unwrap().status.success());
        std::fs::read(dir.path().join(out).join("manifest.csv")).unwrap()
    };
    let a = run("5", None, "a");
    assert_eq!(a, run("5", None, "b"));
    assert_ne!(a, run("6", None, "c"));
    assert_eq!(a, run("6", Some("5"), "d"));
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("tiny.cfg"), "[model]\nwidth_scale = 0.125\n[train]\ncheckpoint_every = 2\n[inversion]\nsteps = 3\n")
        .unwrap();
    let ok = |args: &[&str]| {
        let o = aagan(p, args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    ok(&["datagen", "--n", "12", "--anomaly-rate", "0.5", "--seed", "2", "--out", "faces"]);
    ok(&["--config", "tiny.cfg", "train", "--data", "faces", "--steps", "2", "--n-sample", "3", "--out", "g.ckpt"]);
    assert!(p.join("g.ckpt.step000002").exists() && p.join("g.ckpt.step000002.ppm").exists());
    let hist = std::fs::read_to_string(p.join("g.ckpt.history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);

    let inv = ok(&["--config", "tiny.cfg", "invert", "--checkpoint", "g.ckpt", "--input", "faces/face_00000.ppm"]);
    assert!(inv.starts_with("score="));
    assert_eq!(std::fs::read_to_string(p.join("invert/trace.csv")).unwrap().lines().count(), 5);
    let heat = netpbm::read_image(&p.join("invert/residual.pgm")).unwrap();
    assert_eq!((heat.channels, heat.pixels.iter().max().copied()), (1, Some(255)));

    ok(&["--config", "tiny.cfg", "score", "--checkpoint", "g.ckpt", "--data", "faces", "--batch", "5", "--out", "s.csv"]);
    let first = std::fs::read(p.join("s.csv")).unwrap();
    ok(&["--config", "tiny.cfg", "score", "--checkpoint", "g.ckpt", "--data", "faces", "--batch", "5", "--out", "s2.csv"]);
    assert_eq!(first, std::fs::read(p.join("s2.csv")).unwrap());
    assert!(ok(&["eval", "--scores", "s.csv"]).starts_with("auc="));

    ok(&["degrade", "--input", "faces/face_00001.ppm", "--sigma", "1.5", "--r", "2", "--delta", "0", "--q", "90", "--out", "d.ppm"]);
    assert_eq!(netpbm::read_image(&p.join("d.ppm")).unwrap().shape(), [32, 32, 3]);
    let sampled = ok(&["degrade", "--input", "faces/face_00001.ppm", "--sample-params", "--seed", "3", "--out", "e.ppm"]);
    assert!(sampled.starts_with("sigma="));
    assert_eq!(aagan(p, &["degrade", "--input", "x.ppm", "--sample-params", "--q", "70"]).status.code(), Some(2));

    ok(&["--config", "tiny.cfg", "latent-arith", "--checkpoint", "g.ckpt", "--data", "faces", "--per-group", "2", "--bases", "2", "--points", "3", "--out", "la.ppm"]);
    assert_eq!(netpbm::read_image(&p.join("la.ppm")).unwrap().shape(), [64, 96, 3]);
}

#[test]
fn tabular_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let ok = |args: &[&str]| {
        let o = aagan(p, args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    std::fs::write(p.join("t.cfg"), "[model]\nlatent_dim = 4\ntabular_hidden = 16\n[inversion]\nsteps = 20\n").unwrap();
    ok(&["datagen", "--kind", "transactions", "--n", "120", "--features", "3", "--anomaly-rate", "0.1", "--out", "tx.csv"]);
    ok(&["--config", "t.cfg", "train", "--data", "tx.csv", "--steps", "20", "--n-sample", "16", "--out", "t.ckpt"]);
    ok(&["--config", "t.cfg", "generate", "--checkpoint", "t.ckpt", "--count", "5", "--out", "rows.csv"]);
    let rows = std::fs::read_to_string(p.join("rows.csv")).unwrap();
    assert!(rows.starts_with("id,f0,f1,f2,label\n"));
    assert_eq!(rows.lines().count(), 6);
    let scored = ok(&["--config", "t.cfg", "score", "--checkpoint", "t.ckpt", "--data", "tx.csv", "--out", "s.csv"]);
    assert!(scored.starts_with("auc="));
}
