use std::path::Path;
use std::process::{Command, Output};

fn metasense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metasense"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path, samples: usize) -> String {
    let path = dir.join("config.json");
    let cfg = serde_json::json!({
        "dataset": { "samples": samples, "seed": 3 },
        "conditions": [11],
        "windows": [10, 3],
        "training": { "epochs": 1, "batch_size": 8 },
        "surrogate": { "training": { "epochs": 1, "batch_size": 8 } }
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_subcommands() {
    let o = metasense(&["--help"]);
    assert!(o.status.success());
    for cmd in ["gen", "train", "eval", "suite", "report"] {
        assert!(stdout(&o).contains(cmd), "{cmd}");
    }
}

#[test]
fn unknown_experiment_and_config_keys_fail() {
    let o = metasense(&["suite", "table9"]);
    assert!(!o.status.success());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"training": {"learning_rate": 1}}"#).unwrap();
    let o = metasense(&["gen", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("metasense: config"), "{}", stderr(&o));
}

#[test]
fn gen_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 24);
    let data = dir.path().join("data");
    let o = metasense(&[
        "gen",
        "--config",
        &cfg,
        "--threads",
        "1",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "manifest.json",
        "curves.f64",
        "images.f64",
        "labels.csv",
        "split_11.json",
        "config.json",
    ] {
        assert!(data.join(f).exists(), "{f}");
    }

    let run = dir.path().join("train");
    let o = metasense(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trained = stdout(&o);
    assert!(run.join("model.ckpt").exists() && run.join("train_log.csv").exists());

    let o = metasense(&[
        "eval",
        "--config",
        &cfg,
        "--data",
        data.to_str().unwrap(),
        "--model",
        run.join("model.ckpt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), trained);
}

#[test]
fn suite_writes_metrics_and_report_combines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 20);
    let t3 = dir.path().join("t3");
    let o = metasense(&[
        "suite",
        "table3",
        "--config",
        &cfg,
        "--threads",
        "1",
        "--out",
        t3.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(t3.join("metrics.csv")).unwrap();
    assert_eq!(stdout(&o), csv);
    let keys: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(keys, ["10λ", "3λ"]);

    let combined = dir.path().join("combined");
    let o = metasense(&[
        "report",
        "--from",
        t3.to_str().unwrap(),
        "--out",
        combined.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("table3:10λ"));
    assert!(combined.join("metrics.csv").exists());
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), 4);
    let out = dir.path().join("t1");
    let o = metasense(&[
        "suite",
        "table1",
        "--config",
        &cfg,
        "--threads",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("metasense: train"), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed 11"), "{}", stderr(&o));
}
