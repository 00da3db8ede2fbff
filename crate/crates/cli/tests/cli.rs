use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dsgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsgan")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn ring_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "ring.json",
        r#"{"task": "ring", "steps": 30, "batch_size": 16, "eval_every": 10, "seed": 3}"#,
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn train(cfg: &Path, out: &Path) {
    let o = dsgan(&["train", "--config", s(cfg), "--out", s(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_writes_all_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = ring_config(dir.path());
    let out = dir.path().join("run");
    train(&cfg, &out);

    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("step,d_loss,g_adv,g_rec,l_z,ratio_mean,modes,hq_frac,diversity,dist_min,frechet")
    );
    assert_eq!(lines.count(), 30);
    for ckpt in ["final.ckpt.json", "best.ckpt.json"] {
        assert_eq!(read_json(&out.join(ckpt))["version"], 1);
    }
    let report = read_json(&out.join("eval.json"));
    for key in ["modes_captured", "hq_fraction", "pairwise_diversity", "dist_min", "frechet2", "n_samples"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["n_samples"], 2500);
}

#[test]
fn misspelled_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"task": "ring", "lamda": 0.1}"#);
    let o = dsgan(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn repeated_runs_give_identical_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = ring_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&cfg, &a);
    train(&cfg, &b);
    let read = |p: &Path| std::fs::read(p.join("metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(
        std::fs::read(a.join("final.ckpt.json")).unwrap(),
        std::fs::read(b.join("final.ckpt.json")).unwrap()
    );
}

#[test]
fn eval_reproduces_training_report() {
    let dir = TempDir::new().unwrap();
    let cfg = ring_config(dir.path());
    let out = dir.path().join("run");
    train(&cfg, &out);
    let report = dir.path().join("eval.json");
    let o = dsgan(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&out.join("final.ckpt.json")),
        "--out",
        s(&report),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(out.join("eval.json")).unwrap());
}

#[test]
fn eval_rejects_missing_or_foreign_checkpoint() {
    let dir = TempDir::new().unwrap();
    let cfg = ring_config(dir.path());
    let report = dir.path().join("eval.json");
    let o = dsgan(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&dir.path().join("nope.json")),
        "--out",
        s(&report),
    ]);
    assert!(!o.status.success());

    let other = write_config(
        dir.path(),
        "wide.json",
        r#"{"task": "ring", "z_dim": 3, "steps": 2, "batch_size": 8, "eval_every": 2}"#,
    );
    let out = dir.path().join("wide");
    train(&other, &out);
    let o = dsgan(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&out.join("final.ckpt.json")),
        "--out",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_lambda() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{"task": "ring", "steps": 10, "batch_size": 16, "eval_every": 10}"#,
    );
    let out = dir.path().join("sweep");
    let o = dsgan(&[
        "sweep",
        "--config",
        s(&cfg),
        "--lambdas",
        "0,0.05,0.1,0.5",
        "--out",
        s(&out),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "lambda,modes,hq_frac,diversity,frechet");
    assert_eq!(lines.len(), 5);
    for (line, lambda) in lines[1..].iter().zip(["0", "0.05", "0.1", "0.5"]) {
        let cells: Vec<_> = line.split(',').collect();
        assert_eq!(cells.len(), 5);
        assert_eq!(cells[0], lambda);
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().is_ok()), "{line}");
    }
    assert_eq!(read_json(&out.join("summary.json")).as_array().unwrap().len(), 4);
}

#[test]
fn verify_passes_on_random_generator() {
    let dir = TempDir::new().unwrap();
    let cfg = ring_config(dir.path());
    let out = dir.path().join("verify.json");
    let o = dsgan(&["verify", "--config", s(&cfg), "--out", s(&out), "--probes", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v = read_json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["gradient_bound"]["pairs"], 100);
    assert_eq!(v["gradient_bound"]["violations"], 0);
    assert_eq!(v["attraction"]["counterexamples"], 0);
    assert!(v["attraction"]["epsilon"].as_f64().unwrap() > 0.0);
}

#[test]
fn interp_emits_requested_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = ring_config(dir.path());
    let run = dir.path().join("run");
    train(&cfg, &run);
    let out = dir.path().join("path.csv");
    let o = dsgan(&[
        "interp",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&run.join("final.ckpt.json")),
        "--out",
        s(&out),
        "--steps",
        "9",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "t,z0,z1,y0,y1");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("0,") && lines[9].starts_with("1,"));
}

#[test]
fn conditional_interp_needs_label() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cond.json",
        r#"{"task": "conditional_ring", "steps": 2, "batch_size": 8, "eval_every": 2}"#,
    );
    let run = dir.path().join("run");
    train(&cfg, &run);
    assert!(run.join("coverage.json").exists());
    let ckpt = run.join("final.ckpt.json");
    let out = dir.path().join("path.csv");
    let base = ["interp", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&out)];
    assert_eq!(dsgan(&base).status.code(), Some(2));
    let mut with_label = base.to_vec();
    with_label.extend(["--label", "2", "--mode", "linear"]);
    assert!(dsgan(&with_label).status.success());
}
