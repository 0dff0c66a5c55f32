use serde::{Deserialize, Serialize};

use super::loss::{mse, psnr_from_mse};
use super::{ModelError, MultitaskNet, Prediction};
use crate::dataset::Sample;

const EVAL_BATCH: usize = 64;

/// Test-set means in the column order of the results tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `10·log₁₀(1/MSE_image)`.
    pub psnr_db: f64,
    pub mse_image: f64,
    pub mse_permi: f64,
    pub mse_peak: f64,
    pub acc_peak: f64,
    pub acc_permi: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "psnr_db,mse_image,mse_permi,mse_peak,acc_peak,acc_permi";

    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.psnr_db, self.mse_image, self.mse_permi, self.mse_peak, self.acc_peak, self.acc_permi
        )
    }
}

/// Metrics for given predictions against their samples' labels.
pub fn score(preds: &[Prediction], samples: &[&Sample]) -> Result<MetricsReport, ModelError> {
    if samples.is_empty() || preds.len() != samples.len() {
        return Err(if samples.is_empty() {
            ModelError::Empty
        } else {
            ModelError::Length {
                expected: samples.len(),
                got: preds.len(),
            }
        });
    }
    let n = samples.len() as f64;
    let (mut img, mut permi, mut peak, mut hit_peak, mut hit_permi) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (p, s) in preds.iter().zip(samples) {
        img += mse(&p.image, &s.truth.image)?;
        let e = p.permittivity - s.truth.permittivity;
        permi += e * e;
        peak += mse(&p.quantity, &s.truth.quantity)?;
        hit_peak += (p.count() == s.spec.count) as usize;
        // f64::round rounds half away from zero.
        hit_permi += (p.permittivity.round() == s.truth.permittivity) as usize;
    }
    let mse_image = img / n;
    Ok(MetricsReport {
        psnr_db: psnr_from_mse(mse_image),
        mse_image,
        mse_permi: permi / n,
        mse_peak: peak / n,
        acc_peak: hit_peak as f64 / n,
        acc_permi: hit_permi as f64 / n,
    })
}

pub fn predict_all(net: &MultitaskNet, samples: &[&Sample]) -> Result<Vec<Prediction>, ModelError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let curves: Vec<&[f64]> = chunk.iter().map(|s| s.curve.as_slice()).collect();
        out.extend(net.predict_batch(&curves)?);
    }
    Ok(out)
}

pub fn evaluate(net: &MultitaskNet, samples: &[&Sample]) -> Result<MetricsReport, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::Empty);
    }
    score(&predict_all(net, samples)?, samples)
}
