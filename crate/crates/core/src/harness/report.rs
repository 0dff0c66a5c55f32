use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Experiment;
use super::svg::{Chart, Series, Style};
use super::HarnessError;
use crate::model::MetricsReport;
use crate::surrogate::SurrogateReport;

/// One trained model scored on its test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Row key: condition number, window (`10λ`), loss mode, or data source.
    pub condition: String,
    pub split_seed: u64,
    /// Post-processing policy of the inputs, e.g. `fit-10`.
    pub policy: String,
    pub image_term: String,
    /// Checkpoint path relative to the run directory.
    pub checkpoint: String,
    pub best_epoch: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub split_seed: u64,
    pub checkpoint: String,
    pub best_epoch: usize,
    pub test: SurrogateReport,
    /// PSNR of the surrogate curve for a fixed two-target scene
    /// (permittivity 20, 0.32λ apart) against the solver curve.
    pub showcase_psnr_db: f64,
    pub hybrid_fraction: f64,
    pub hybrid_replaced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub experiment: Option<Experiment>,
    pub config_hash: String,
    pub dataset_seed: u64,
    pub training_seed: u64,
    pub rows: Vec<RunRow>,
    pub surrogate: Option<SurrogateSummary>,
    pub wall_clock_s: f64,
}

pub const METRICS_HEADER: &str = "condition,psnr_db,mse_image,mse_permi,mse_peak,acc_peak,acc_permi";

impl RunReport {
    pub fn row(&self, condition: &str) -> Option<&RunRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// Rows in the metrics CSV schema. Contains no timing information, so
    /// equal configurations give equal bytes.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{}", r.condition, r.metrics.csv_fields());
        }
        s
    }

    /// Concatenate reports, prefixing each row key with its experiment name.
    pub fn combine(reports: &[RunReport]) -> RunReport {
        let mut out = RunReport::default();
        for rep in reports {
            let prefix = rep.experiment.map(|e| format!("{}:", e.name())).unwrap_or_default();
            out.rows.extend(rep.rows.iter().map(|r| RunRow {
                condition: format!("{prefix}{}", r.condition),
                ..r.clone()
            }));
            out.wall_clock_s += rep.wall_clock_s;
        }
        out
    }
}

/// Parse a metrics CSV back into `(condition, metrics)` rows.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<(String, MetricsReport)>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(HarnessError::Report("metrics CSV header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(HarnessError::Report(format!("expected 7 fields in `{line}`")));
            }
            let num = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|e| HarnessError::Report(format!("field {i} of `{line}`: {e}")))
            };
            Ok((
                f[0].to_string(),
                MetricsReport {
                    psnr_db: num(1)?,
                    mse_image: num(2)?,
                    mse_permi: num(3)?,
                    mse_peak: num(4)?,
                    acc_peak: num(5)?,
                    acc_permi: num(6)?,
                },
            ))
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Write `metrics.csv`, `report.json` and a per-row metric chart into `dir`.
pub fn report_render(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write(&dir.join("metrics.csv"), &report.metrics_csv())?;
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Report(e.to_string()))?;
    write(&dir.join("report.json"), &(json + "\n"))?;
    if !report.rows.is_empty() {
        write(&dir.join("metrics.svg"), &metrics_chart(report).render())?;
    }
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<RunReport, HarnessError> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
}

/// PSNR and accuracies per row; for the window ablation the x axis is the
/// window length.
fn metrics_chart(report: &RunReport) -> Chart {
    let windows: Option<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| r.condition.strip_suffix('λ').and_then(|w| w.parse().ok()))
        .collect();
    let (xs, x_label) = match windows {
        Some(w) => (w, "detection window (wavelengths)"),
        None => ((1..=report.rows.len()).map(|i| i as f64).collect(), "row"),
    };
    let column = |f: fn(&MetricsReport) -> f64| report.rows.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>();
    let title = match report.experiment {
        Some(e) => format!("{}: test metrics", e.name()),
        None => "test metrics".to_string(),
    };
    Chart::new(title, x_label, "PSNR (dB) / accuracy (%)")
        .with(Series::sampled(
            "PSNR (dB)",
            &xs,
            &column(|m| m.psnr_db),
            Style::Markers,
        ))
        .with(Series::sampled(
            "Acc_peak (%)",
            &xs,
            &column(|m| 100.0 * m.acc_peak),
            Style::Markers,
        ))
        .with(Series::sampled(
            "Acc_permi (%)",
            &xs,
            &column(|m| 100.0 * m.acc_permi),
            Style::Markers,
        ))
}
