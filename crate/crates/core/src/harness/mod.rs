//! Experiment orchestration: configuration, the table suites, reports and
//! plots.

pub mod config;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, SurrogateSettings};
pub use report::{parse_metrics_csv, read_report, report_render, RunReport, RunRow, SurrogateSummary, METRICS_HEADER};

use crate::dataset::{
    build_dataset, image_grid, postprocess_curve, save_dataset, save_split, simulate_raw, split_dataset, window_slice,
    Dataset, DatasetSplit, GroundTruth, InterpMode, PostProcessPolicy, Sample, SceneSpec,
};
use crate::model::train::{load_model, save_model, select, write_train_log};
use crate::model::{evaluate, psnr, ImageTerm, MultitaskConfig, MultitaskNet, TrainConfig};
use crate::surrogate::{
    evaluate_surrogate, save_surrogate, surrogate_split, synthesize_hybrid_dataset, train_surrogate, SurrogateNet,
};
use svg::{Chart, Series, Style};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` failed (seed {seed}): {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        #[source]
        source: BoxError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report: {0}")]
    Report(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Name of the failing stage, if the error came from one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            HarnessError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

trait StageExt<T> {
    fn stage(self, stage: &'static str, seed: u64) -> Result<T, HarnessError>;
}

impl<T, E: Into<BoxError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str, seed: u64) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError::Stage {
            stage,
            seed,
            source: e.into(),
        })
    }
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Write `config.json` and `config.sha256` into `dir`.
pub fn echo_config(config: &ExperimentConfig, dir: &Path) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write(&dir.join("config.json"), &config.resolved_json())?;
    write(&dir.join("config.sha256"), &(config.hash() + "\n"))
}

pub fn generate(config: &ExperimentConfig) -> Result<Dataset, HarnessError> {
    build_dataset(&config.physics, &config.dataset, config.threads).stage("dataset", config.dataset.seed)
}

#[allow(clippy::too_many_arguments)]
/// Train one multitask model, persist its checkpoint, log and split under
/// `dir`, and score it on the test indices of `eval_set` (which defaults to
/// the training dataset).
pub fn train_condition(
    condition: &str,
    model: &MultitaskConfig,
    training: &TrainConfig,
    dataset: &Dataset,
    eval_set: Option<&Dataset>,
    split: &DatasetSplit,
    dir: &Path,
    run_root: &Path,
) -> Result<RunRow, HarnessError> {
    create_dir(dir)?;
    let outcome = crate::model::train(model, dataset, split, training).stage("train", split.seed)?;
    let ckpt = dir.join("model.ckpt");
    save_model(&outcome.net, &ckpt).stage("checkpoint", split.seed)?;
    write_train_log(&dir.join("train_log.csv"), &outcome.history).stage("train-log", split.seed)?;
    save_split(split, dir).stage("split", split.seed)?;

    let eval_set = eval_set.unwrap_or(dataset);
    let test = select(eval_set, &split.test).stage("evaluate", split.seed)?;
    let metrics = evaluate(&outcome.net, &test).stage("evaluate", split.seed)?;
    plot_predictions(&outcome.net, eval_set, &test, dir)?;
    log::info!(
        "{condition}: test PSNR {:.2} dB, Acc_peak {:.3}",
        metrics.psnr_db,
        metrics.acc_peak
    );
    let image_term = match training.weights.image_term {
        ImageTerm::Psnr => "psnr",
        ImageTerm::Mse => "mse",
    };
    Ok(RunRow {
        condition: condition.to_string(),
        split_seed: split.seed,
        policy: eval_set.config.policy.id(),
        image_term: image_term.to_string(),
        checkpoint: relative(&ckpt, run_root),
        best_epoch: outcome.best_epoch,
        metrics,
    })
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

/// Predicted image over the shaded ground truth for the first test sample of
/// each target count.
fn plot_predictions(net: &MultitaskNet, dataset: &Dataset, test: &[&Sample], dir: &Path) -> Result<(), HarnessError> {
    let grid = image_grid(dataset.config.policy.window);
    for count in 1..=3 {
        let Some(s) = test.iter().find(|s| s.spec.count == count) else {
            continue;
        };
        let p = net.predict(&s.curve).stage("plot", s.scene_seed)?;
        let chart = Chart::new(
            format!(
                "{count} target(s), permittivity {} (predicted {:.2}, count {})",
                s.spec.permittivity,
                p.permittivity,
                p.count()
            ),
            "x (wavelengths)",
            "normalised image",
        )
        .with(Series::sampled("ground truth", &grid, &s.truth.image, Style::Shaded))
        .with(Series::sampled("prediction", &grid, &p.image, Style::Line));
        write(&dir.join(format!("prediction_{count}.svg")), &chart.render())?;
    }
    Ok(())
}

/// Score a saved checkpoint on the test indices of `split`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    dataset: &Dataset,
    split: &DatasetSplit,
) -> Result<crate::model::MetricsReport, HarnessError> {
    let net = load_model(checkpoint).stage("load-model", split.seed)?;
    let test = select(dataset, &split.test).stage("evaluate", split.seed)?;
    evaluate(&net, &test).stage("evaluate", split.seed)
}

/// The fixed two-target scene used to showcase the surrogate.
pub fn showcase_scene() -> SceneSpec {
    SceneSpec {
        count: 2,
        positions: vec![-0.16, 0.16],
        permittivity: 20,
    }
}

/// Surrogate vs solver curve for [`showcase_scene`]: `(psnr, predicted,
/// actual)`.
pub fn surrogate_showcase(
    config: &ExperimentConfig,
    net: &SurrogateNet,
) -> Result<(f64, Vec<f64>, Vec<f64>), HarnessError> {
    let spec = showcase_scene();
    let policy = config.dataset.policy;
    let raw = simulate_raw(&config.physics, &spec).stage("showcase", 0)?;
    let window = window_slice(&raw, &policy).stage("showcase", 0)?;
    let actual = postprocess_curve(window, &policy).stage("showcase", 0)?.values;
    let truth = GroundTruth::from_spec(&spec, policy.window);
    let predicted = net.predict(&truth).stage("showcase", 0)?;
    let db = psnr(&predicted, &actual).stage("showcase", 0)?;
    Ok((db, predicted, actual))
}

fn table_rows(
    config: &ExperimentConfig,
    dataset: &Dataset,
    training: &TrainConfig,
    out: &Path,
) -> Result<Vec<RunRow>, HarnessError> {
    let mut rows = Vec::with_capacity(config.conditions.len());
    for (i, &seed) in config.conditions.iter().enumerate() {
        let split = split_dataset(dataset.len(), seed).stage("split", seed)?;
        let key = (i + 1).to_string();
        let dir = out.join("runs").join(format!("condition-{key}"));
        rows.push(train_condition(
            &key,
            &config.model,
            training,
            dataset,
            None,
            &split,
            &dir,
            out,
        )?);
    }
    Ok(rows)
}

fn with_policy(dataset: &Dataset, mode: InterpMode, window: u32) -> Result<Dataset, HarnessError> {
    dataset
        .with_policy(PostProcessPolicy { mode, window })
        .stage("postprocess", dataset.config.seed)
}

/// Run the configured experiment from scratch, writing every artefact under
/// `out`. Nothing from earlier runs is read.
pub fn run_suite(config: &ExperimentConfig, out: &Path) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let start = Instant::now();
    echo_config(config, out)?;
    let base = generate(config)?;
    let window = config.dataset.policy.window;
    let first = config.conditions[0];
    let mut report = RunReport {
        experiment: Some(config.experiment),
        config_hash: config.hash(),
        dataset_seed: config.dataset.seed,
        training_seed: config.training.seed,
        ..RunReport::default()
    };
    let first_split = || split_dataset(base.len(), first).stage("split", first);

    match config.experiment {
        Experiment::Table1 | Experiment::Table2 => {
            let mode = if config.experiment == Experiment::Table1 {
                InterpMode::FitSmooth
            } else {
                InterpMode::LinearInterp
            };
            let dataset = with_policy(&base, mode, window)?;
            save_dataset(&dataset, &out.join("dataset")).stage("save-dataset", config.dataset.seed)?;
            report.rows = table_rows(config, &dataset, &config.training, out)?;
        }
        Experiment::Table3 => {
            save_dataset(&base, &out.join("dataset")).stage("save-dataset", config.dataset.seed)?;
            let split = first_split()?;
            for &w in &config.windows {
                let dataset = with_policy(&base, InterpMode::FitSmooth, w)?;
                let dir = out.join("runs").join(format!("window-{w}"));
                let key = format!("{w}λ");
                report.rows.push(train_condition(
                    &key,
                    &config.model,
                    &config.training,
                    &dataset,
                    None,
                    &split,
                    &dir,
                    out,
                )?);
            }
        }
        Experiment::Table4 => {
            let dataset = with_policy(&base, InterpMode::FitSmooth, window)?;
            save_dataset(&dataset, &out.join("dataset")).stage("save-dataset", config.dataset.seed)?;
            let split = first_split()?;
            for (key, term) in [("psnr", ImageTerm::Psnr), ("mse", ImageTerm::Mse)] {
                let mut training = config.training.clone();
                training.weights.image_term = term;
                let dir = out.join("runs").join(format!("loss-{key}"));
                report.rows.push(train_condition(
                    key,
                    &config.model,
                    &training,
                    &dataset,
                    None,
                    &split,
                    &dir,
                    out,
                )?);
            }
        }
        Experiment::Surrogate => {
            let dataset = with_policy(&base, InterpMode::FitSmooth, window)?;
            save_dataset(&dataset, &out.join("dataset")).stage("save-dataset", config.dataset.seed)?;
            report.surrogate = Some(run_surrogate(config, &dataset, out, &mut report.rows)?);
        }
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    report_render(&report, out)?;
    Ok(report)
}

fn run_surrogate(
    config: &ExperimentConfig,
    dataset: &Dataset,
    out: &Path,
    rows: &mut Vec<RunRow>,
) -> Result<SurrogateSummary, HarnessError> {
    let s = &config.surrogate;
    let dir = out.join("runs").join("surrogate");
    create_dir(&dir)?;
    let split = surrogate_split(dataset.len(), s.split_seed).stage("surrogate-split", s.split_seed)?;
    let outcome = train_surrogate(&s.model, dataset, &split, &s.training).stage("surrogate-train", s.split_seed)?;
    let ckpt = dir.join("surrogate.ckpt");
    save_surrogate(&outcome.net, &ckpt).stage("surrogate-checkpoint", s.split_seed)?;
    write_train_log(&dir.join("train_log.csv"), &outcome.history).stage("train-log", s.split_seed)?;
    save_split(&split, &dir).stage("split", s.split_seed)?;
    let test = select(dataset, &split.test).stage("surrogate-evaluate", s.split_seed)?;
    let report = evaluate_surrogate(&outcome.net, &test).stage("surrogate-evaluate", s.split_seed)?;
    log::info!("surrogate: mean test PSNR {:.2} dB", report.mean_psnr_db);

    let (showcase_psnr_db, predicted, actual) = surrogate_showcase(config, &outcome.net)?;
    let grid = image_grid(config.dataset.policy.window);
    let chart = Chart::new(
        format!("two targets 0.32λ apart, permittivity 20: {showcase_psnr_db:.1} dB"),
        "x (wavelengths)",
        "normalised intensity",
    )
    .with(Series::sampled("solver", &grid, &actual, Style::Shaded))
    .with(Series::sampled("surrogate", &grid, &predicted, Style::Line));
    write(&dir.join("showcase.svg"), &chart.render())?;

    // Model 1 on all-real data vs the hybrid set, both scored on real curves.
    let first = config.conditions[0];
    let model_split = split_dataset(dataset.len(), first).stage("split", first)?;
    let real_dir = out.join("runs").join("data-real");
    rows.push(train_condition(
        "real",
        &config.model,
        &config.training,
        dataset,
        None,
        &model_split,
        &real_dir,
        out,
    )?);
    let hybrid = synthesize_hybrid_dataset(dataset, &outcome.net, s.hybrid_fraction, s.hybrid_seed)
        .stage("hybrid", s.hybrid_seed)?;
    save_dataset(&hybrid, &out.join("hybrid_dataset")).stage("save-dataset", s.hybrid_seed)?;
    let replaced = hybrid.hybrid.as_ref().map_or(0, |h| h.replaced.len());
    let hybrid_dir = out.join("runs").join("data-hybrid");
    rows.push(train_condition(
        "hybrid",
        &config.model,
        &config.training,
        &hybrid,
        Some(dataset),
        &model_split,
        &hybrid_dir,
        out,
    )?);

    Ok(SurrogateSummary {
        split_seed: s.split_seed,
        checkpoint: relative(&ckpt, out),
        best_epoch: outcome.best_epoch,
        test: report,
        showcase_psnr_db,
        hybrid_fraction: s.hybrid_fraction,
        hybrid_replaced: replaced,
    })
}

/// Default output directory for an experiment.
pub fn default_out_dir(experiment: Experiment) -> PathBuf {
    PathBuf::from("runs").join(experiment.name())
}

#[cfg(test)]
mod tests;
