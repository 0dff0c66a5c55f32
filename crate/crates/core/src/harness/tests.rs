use super::*;
use crate::model::MetricsReport;

fn tiny(experiment: Experiment, samples: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        experiment,
        threads: Some(1),
        ..ExperimentConfig::default()
    };
    c.dataset.samples = samples;
    c.dataset.seed = 5;
    c.training.epochs = 2;
    c.training.batch_size = 8;
    c.surrogate.training.epochs = 2;
    c.surrogate.training.batch_size = 8;
    c
}

fn metrics(psnr_db: f64) -> MetricsReport {
    MetricsReport {
        psnr_db,
        mse_image: 10f64.powf(-psnr_db / 10.0),
        mse_permi: 0.5,
        mse_peak: 0.01,
        acc_peak: 0.98,
        acc_permi: 0.75,
    }
}

fn row(condition: &str, psnr_db: f64) -> RunRow {
    RunRow {
        condition: condition.to_string(),
        split_seed: 1,
        policy: "fit-10".into(),
        image_term: "psnr".into(),
        checkpoint: format!("runs/{condition}/model.ckpt"),
        best_epoch: 3,
        metrics: metrics(psnr_db),
    }
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let c = ExperimentConfig::default();
    let back = ExperimentConfig::from_json(&c.resolved_json()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    assert_eq!(ExperimentConfig::from_json("{}").unwrap(), c);

    let partial = ExperimentConfig::from_json(r#"{"experiment": "table3", "dataset": {"samples": 40}}"#).unwrap();
    assert_eq!(partial.experiment, Experiment::Table3);
    assert_eq!(partial.dataset.samples, 40);
    assert_ne!(partial.hash(), c.hash());

    for bad in [
        r#"{"epochs": 3}"#,
        r#"{"training": {"epoch": 3}}"#,
        r#"{"physics": {"radius": 0.05, "colour": 1}}"#,
        r#"{"windows": [10, 4]}"#,
        r#"{"experiment": "table9"}"#,
        r#"{"threads": 0}"#,
        r#"{"surrogate": {"hybrid_fraction": 1.5}}"#,
    ] {
        assert!(
            matches!(ExperimentConfig::from_json(bad), Err(HarnessError::Config(_))),
            "{bad}"
        );
    }
}

#[test]
fn experiment_names_parse() {
    for e in Experiment::ALL {
        assert_eq!(Experiment::parse(e.name()), Some(e));
    }
    assert_eq!(Experiment::parse("table5"), None);
}

#[test]
fn empty_report_renders_header_only() {
    let dir = tempfile::tempdir().unwrap();
    report_render(&RunReport::default(), dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv, format!("{METRICS_HEADER}\n"));
    assert!(parse_metrics_csv(&csv).unwrap().is_empty());
    assert_eq!(read_report(dir.path()).unwrap(), RunReport::default());
}

#[test]
fn rows_render_and_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let one = RunReport {
        rows: vec![row("1", 35.25)],
        ..RunReport::default()
    };
    report_render(&one, dir.path()).unwrap();
    let parsed = parse_metrics_csv(&std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(parsed, vec![("1".to_string(), metrics(35.25))]);

    let five = RunReport {
        experiment: Some(Experiment::Table1),
        rows: (1..=5).map(|i| row(&i.to_string(), 30.0 + i as f64)).collect(),
        ..RunReport::default()
    };
    report_render(&five, dir.path()).unwrap();
    let parsed = parse_metrics_csv(&std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap()).unwrap();
    let keys: Vec<&str> = parsed.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(keys, ["1", "2", "3", "4", "5"]);
    assert_eq!(read_report(dir.path()).unwrap(), five);
    let svg = std::fs::read_to_string(dir.path().join("metrics.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn malformed_metrics_csv_rejected() {
    assert!(parse_metrics_csv("a,b\n").is_err());
    assert!(parse_metrics_csv(&format!("{METRICS_HEADER}\n1,2,3\n")).is_err());
    assert!(parse_metrics_csv(&format!("{METRICS_HEADER}\n1,x,0,0,0,0,0\n")).is_err());
}

#[test]
fn combined_reports_prefix_rows() {
    let a = RunReport {
        experiment: Some(Experiment::Table1),
        rows: vec![row("1", 30.0)],
        wall_clock_s: 2.0,
        ..RunReport::default()
    };
    let b = RunReport {
        experiment: Some(Experiment::Table4),
        rows: vec![row("psnr", 31.0), row("mse", 29.0)],
        wall_clock_s: 3.0,
        ..RunReport::default()
    };
    let c = RunReport::combine(&[a, b]);
    let keys: Vec<&str> = c.rows.iter().map(|r| r.condition.as_str()).collect();
    assert_eq!(keys, ["table1:1", "table4:psnr", "table4:mse"]);
    assert_eq!(c.wall_clock_s, 5.0);
}

#[test]
fn charts_are_self_contained_and_tolerate_gaps() {
    let chart = svg::Chart::new("a <b> & c", "x", "y")
        .with(svg::Series::new(
            "flat",
            vec![(0.0, 1.0), (1.0, 1.0)],
            svg::Style::Shaded,
        ))
        .with(svg::Series::new(
            "gap",
            vec![(0.0, f64::NAN), (0.5, 2.0)],
            svg::Style::Markers,
        ))
        .with(svg::Series::new("empty", vec![], svg::Style::Line));
    let s = chart.render();
    assert!(s.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(s.contains("a &lt;b&gt; &amp; c"));
    assert!(!s.contains("NaN") && !s.contains("inf") && !s.contains("href"));
    assert_eq!(s, chart.render());
}

#[test]
fn suite_reruns_give_identical_metrics() {
    let cfg = tiny(Experiment::Table4, 30);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_suite(&cfg, a.path()).unwrap();
    let rb = run_suite(&cfg, b.path()).unwrap();
    assert_eq!(ra.rows, rb.rows);
    let keys: Vec<&str> = ra.rows.iter().map(|r| r.condition.as_str()).collect();
    assert_eq!(keys, ["psnr", "mse"]);
    assert_eq!(ra.rows[1].image_term, "mse");
    for file in ["metrics.csv", "config.json", "config.sha256", "dataset/curves.f64"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    assert_eq!(
        std::fs::read_to_string(a.path().join("config.sha256")).unwrap().trim(),
        cfg.hash()
    );
    assert_eq!(ExperimentConfig::load(&a.path().join("config.json")).unwrap(), cfg);
    for r in &ra.rows {
        let ckpt = a.path().join(&r.checkpoint);
        assert!(ckpt.exists(), "{}", r.checkpoint);
        let split = crate::dataset::load_split(ckpt.parent().unwrap(), r.split_seed).unwrap();
        let data = crate::dataset::load_dataset(&a.path().join("dataset")).unwrap();
        assert_eq!(evaluate_checkpoint(&ckpt, &data, &split).unwrap(), r.metrics);
        assert!(ckpt.parent().unwrap().join("train_log.csv").exists());
    }
}

#[test]
fn window_ablation_rows_follow_windows() {
    let mut cfg = tiny(Experiment::Table3, 20);
    cfg.windows = vec![10, 7, 5, 3];
    cfg.training.epochs = 1;
    let dir = tempfile::tempdir().unwrap();
    let r = run_suite(&cfg, dir.path()).unwrap();
    let keys: Vec<&str> = r.rows.iter().map(|r| r.condition.as_str()).collect();
    assert_eq!(keys, ["10λ", "7λ", "5λ", "3λ"]);
    let policies: Vec<&str> = r.rows.iter().map(|r| r.policy.as_str()).collect();
    assert_eq!(policies, ["fit-10", "fit-7", "fit-5", "fit-3"]);
    assert!(r.rows.iter().all(|row| row.split_seed == cfg.conditions[0]));
    assert!(dir.path().join("metrics.svg").exists());
}

#[test]
fn table_suites_cover_each_condition() {
    let mut cfg = tiny(Experiment::Table2, 20);
    cfg.training.epochs = 1;
    cfg.conditions = vec![11, 22];
    let dir = tempfile::tempdir().unwrap();
    let r = run_suite(&cfg, dir.path()).unwrap();
    let keys: Vec<(&str, u64, &str)> = r
        .rows
        .iter()
        .map(|r| (r.condition.as_str(), r.split_seed, r.policy.as_str()))
        .collect();
    assert_eq!(keys, [("1", 11, "linear-10"), ("2", 22, "linear-10")]);
}

#[test]
fn surrogate_suite_reports_hybrid_rows() {
    let cfg = tiny(Experiment::Surrogate, 20);
    let dir = tempfile::tempdir().unwrap();
    let r = run_suite(&cfg, dir.path()).unwrap();
    let s = r.surrogate.as_ref().unwrap();
    assert_eq!(s.hybrid_replaced, 4);
    assert!(s.test.mean_psnr_db.is_finite() && s.showcase_psnr_db.is_finite());
    let keys: Vec<&str> = r.rows.iter().map(|r| r.condition.as_str()).collect();
    assert_eq!(keys, ["real", "hybrid"]);
    assert!(dir.path().join(&s.checkpoint).exists());
    assert!(dir.path().join("runs/surrogate/showcase.svg").exists());
    let manifest = crate::dataset::store::read_manifest(&dir.path().join("hybrid_dataset")).unwrap();
    assert_eq!(manifest.hybrid.unwrap().replaced.len(), 4);
}

#[test]
fn failures_name_their_stage() {
    // Four samples leave empty validation and test sets.
    let cfg = tiny(Experiment::Table1, 4);
    let dir = tempfile::tempdir().unwrap();
    let err = run_suite(&cfg, dir.path()).unwrap_err();
    assert_eq!(err.stage(), Some("train"));
    assert!(err.to_string().contains("seed 1101"), "{err}");
}
