//! Image, regression and classification losses with their gradients.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Smallest MSE fed to the PSNR logarithm.
pub const MSE_FLOOR: f64 = 1e-12;
/// PSNR reported when the MSE is at or below the floor.
pub const PSNR_CEILING: f64 = 120.0;
/// Lower clamp on probabilities inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `10·log₁₀(1/MSE)` for signals with peak 1.
pub fn psnr_from_mse(mse: f64) -> f64 {
    -10.0 * mse.max(MSE_FLOOR).log10()
}

pub fn psnr(image: &[f64], truth: &[f64]) -> Result<f64, ModelError> {
    Ok(psnr_from_mse(mse(image, truth)?))
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64, ModelError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(ModelError::Length {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

fn one_hot_index(p: &[f64]) -> Result<usize, ModelError> {
    let ones = p.iter().filter(|&&v| v == 1.0).count();
    let zeros = p.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != p.len() {
        return Err(ModelError::NotOneHot);
    }
    Ok(p.iter().position(|&v| v == 1.0).expect("one entry is 1"))
}

/// `−Σ P·ln Q` for a one-hot `P`, with `Q` clamped below at 1e-12.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64, ModelError> {
    if p.len() != q.len() {
        return Err(ModelError::Length {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(-q[one_hot_index(p)?].max(PROB_FLOOR).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageTerm {
    /// `−α·(PSNR + c)`.
    Psnr,
    /// `α·MSE`.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub offset: f64,
    pub image_term: ImageTerm,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            offset: 50.0,
            image_term: ImageTerm::Psnr,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ModelError> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.offset.is_finite() {
            return Err(ModelError::InvalidConfig(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sample loss and its gradients with respect to the three outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss {
    pub loss: f64,
    pub d_image: Vec<f64>,
    pub d_permittivity: f64,
    pub d_quantity: [f64; 3],
}

/// Gradient of the image term only; shared with the surrogate.
pub fn image_term_grad(
    image: &[f64],
    truth: &[f64],
    term: ImageTerm,
    alpha: f64,
    offset: f64,
) -> Result<(f64, Vec<f64>), ModelError> {
    let m = mse(image, truth)?;
    let n = image.len() as f64;
    let diff = image.iter().zip(truth).map(|(i, g)| 2.0 * (i - g) / n);
    Ok(match term {
        ImageTerm::Psnr => {
            let loss = -alpha * (psnr_from_mse(m) + offset);
            // d(−α·PSNR)/dMSE = 10α/(ln10·MSE); zero where the floor is active.
            let k = if m > MSE_FLOOR {
                alpha * 10.0 / (std::f64::consts::LN_10 * m)
            } else {
                0.0
            };
            (loss, diff.map(|d| k * d).collect())
        }
        ImageTerm::Mse => (alpha * m, diff.map(|d| alpha * d).collect()),
    })
}

pub fn total_loss(
    image: &[f64],
    permittivity: f64,
    quantity: &[f64; 3],
    truth_image: &[f64],
    truth_permittivity: f64,
    truth_quantity: &[f64; 3],
    w: &LossWeights,
) -> Result<SampleLoss, ModelError> {
    let (image_loss, d_image) = image_term_grad(image, truth_image, w.image_term, w.alpha, w.offset)?;
    let err = permittivity - truth_permittivity;
    let k = one_hot_index(truth_quantity)?;
    let ce = cross_entropy(truth_quantity, quantity)?;
    let mut d_quantity = [0.0; 3];
    if quantity[k] > PROB_FLOOR {
        d_quantity[k] = -w.gamma / quantity[k];
    }
    let loss = image_loss + w.beta * err * err + w.gamma * ce;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    Ok(SampleLoss {
        loss,
        d_image,
        d_permittivity: 2.0 * w.beta * err,
        d_quantity,
    })
}
