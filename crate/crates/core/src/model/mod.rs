//! The multitask inversion network: shared convolutional encoder, image
//! decoder, target-count classifier and permittivity regressor.

pub mod loss;
pub mod metrics;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Sample, INPUT_LEN};
use crate::nncore::{Activation, Gradients, LayerConfig, NnError, ParamStore, Sequential, Tape, Tensor, Var};
pub use loss::{cross_entropy, mse, psnr, psnr_from_mse, total_loss, ImageTerm, LossWeights};
pub use metrics::{evaluate, MetricsReport};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("label is not one-hot")]
    NotOneHot,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O on {0}: {1}")]
    Io(String, std::io::Error),
}

pub const ENCODING_CHANNELS: usize = 256;
pub const ENCODING_LEN: usize = 3;
pub const ENCODING_WIDTH: usize = ENCODING_CHANNELS * ENCODING_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultitaskConfig {
    pub encoder: Vec<LayerConfig>,
    pub decoder: Vec<LayerConfig>,
    /// Fully-connected widths, 768 first.
    pub classifier: Vec<usize>,
    pub regressor: Vec<usize>,
    pub hidden_activation: Activation,
    /// The regressor's raw output `r` maps to `offset + scale·r`.
    pub permittivity_offset: f64,
    pub permittivity_scale: f64,
}

pub fn default_encoder() -> Vec<LayerConfig> {
    vec![
        LayerConfig::conv(1, 32, 11, 6, 3),
        LayerConfig::conv(32, 128, 9, 6, 3),
        LayerConfig::conv(128, 256, 8, 6, 0),
    ]
}

pub fn default_decoder() -> Vec<LayerConfig> {
    vec![
        LayerConfig::trans_conv(256, 128, 8, 6, 0),
        LayerConfig::trans_conv(128, 32, 9, 6, 3),
        LayerConfig::trans_conv(32, 1, 11, 6, 3),
    ]
}

impl Default for MultitaskConfig {
    fn default() -> Self {
        Self {
            encoder: default_encoder(),
            decoder: default_decoder(),
            classifier: vec![ENCODING_WIDTH, 256, 64, 16, 3],
            regressor: vec![ENCODING_WIDTH, 256, 64, 16, 1],
            hidden_activation: Activation::default(),
            permittivity_offset: 15.0,
            permittivity_scale: 5.0,
        }
    }
}

impl MultitaskConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        let mut shape = vec![1, 1, INPUT_LEN];
        for l in &self.encoder {
            if !matches!(l, LayerConfig::Conv1d { .. }) {
                return bad("encoder layers must be Conv1D");
            }
            shape = l.output_shape(&shape)?;
        }
        if shape != [1, ENCODING_CHANNELS, ENCODING_LEN] {
            return bad("encoder must map 1×701 to 256×3");
        }
        for l in &self.decoder {
            if !matches!(l, LayerConfig::TransConv1d { .. }) {
                return bad("decoder layers must be TransConv1D");
            }
            shape = l.output_shape(&shape)?;
        }
        if shape != [1, 1, INPUT_LEN] {
            return bad("decoder must map 256×3 to 1×701");
        }
        for (widths, out) in [(&self.classifier, 3), (&self.regressor, 1)] {
            if widths.len() < 2 || widths[0] != ENCODING_WIDTH || *widths.last().expect("nonempty") != out {
                return bad("head widths must run from 768 to the head output size");
            }
        }
        if !(self.permittivity_scale.is_finite() && self.permittivity_scale != 0.0) {
            return bad("permittivity scale must be finite and nonzero");
        }
        Ok(())
    }
}

pub(crate) fn dense_stack(widths: &[usize]) -> Vec<LayerConfig> {
    widths.windows(2).map(|w| LayerConfig::dense(w[0], w[1])).collect()
}

/// Output of one forward pass for a single curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image: Vec<f64>,
    pub permittivity: f64,
    pub quantity: [f64; 3],
}

impl Prediction {
    /// Predicted target count (1–3); ties go to the smaller count.
    pub fn count(&self) -> usize {
        let mut best = 0;
        for i in 1..3 {
            if self.quantity[i] > self.quantity[best] {
                best = i;
            }
        }
        best + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskNet {
    pub config: MultitaskConfig,
    pub params: ParamStore,
    encoder: Sequential,
    decoder: Sequential,
    classifier: Sequential,
    regressor: Sequential,
}

pub(crate) struct HeadVars {
    pub image: Var,
    pub permittivity: Var,
    pub quantity: Var,
}

impl MultitaskNet {
    pub fn new(config: MultitaskConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let act = config.hidden_activation;
        let act_layer = LayerConfig::Activation { activation: act };
        let encoder = Sequential::build(&mut params, "encoder", &config.encoder, act, Some(act_layer), &mut rng);
        let decoder = Sequential::build(&mut params, "decoder", &config.decoder, act, None, &mut rng);
        let classifier = Sequential::build(
            &mut params,
            "classifier",
            &dense_stack(&config.classifier),
            act,
            Some(LayerConfig::Softmax),
            &mut rng,
        );
        let regressor = Sequential::build(
            &mut params,
            "regressor",
            &dense_stack(&config.regressor),
            act,
            None,
            &mut rng,
        );
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
            classifier,
            regressor,
        })
    }

    pub fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "model": "multitask", "config": self.config })
    }

    pub(crate) fn record(&self, tape: &mut Tape<'_>, curves: Tensor) -> Result<HeadVars, ModelError> {
        let batch = curves.batch();
        let x = tape.input(curves)?;
        let code = self.encoder.forward(tape, x)?;
        let image = self.decoder.forward(tape, code)?;
        let flat = tape.reshape(code, vec![batch, ENCODING_WIDTH])?;
        let quantity = self.classifier.forward(tape, flat)?;
        let permittivity = self.regressor.forward(tape, flat)?;
        Ok(HeadVars {
            image,
            permittivity,
            quantity,
        })
    }

    fn curves_tensor(curves: &[&[f64]]) -> Result<Tensor, ModelError> {
        for c in curves {
            if c.len() != INPUT_LEN {
                return Err(ModelError::Length {
                    expected: INPUT_LEN,
                    got: c.len(),
                });
            }
        }
        Ok(Tensor::from_rows(curves)?)
    }

    fn predictions(&self, tape: &Tape<'_>, heads: &HeadVars) -> Vec<Prediction> {
        let img = tape.value(heads.image);
        let perm = tape.value(heads.permittivity);
        let q = tape.value(heads.quantity);
        (0..img.batch())
            .map(|b| Prediction {
                image: img.row(b).to_vec(),
                permittivity: self.config.permittivity_offset + self.config.permittivity_scale * perm.row(b)[0],
                quantity: q.row(b).try_into().expect("three classes"),
            })
            .collect()
    }

    pub fn predict_batch(&self, curves: &[&[f64]]) -> Result<Vec<Prediction>, ModelError> {
        if curves.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new(&self.params);
        let heads = self.record(&mut tape, Self::curves_tensor(curves)?)?;
        Ok(self.predictions(&tape, &heads))
    }

    pub fn predict(&self, curve: &[f64]) -> Result<Prediction, ModelError> {
        Ok(self.predict_batch(&[curve])?.remove(0))
    }

    /// Mean composite loss over `samples` and its parameter gradients.
    pub fn loss_and_gradients(
        &self,
        samples: &[&Sample],
        weights: &LossWeights,
    ) -> Result<(f64, Vec<Prediction>, Gradients), ModelError> {
        if samples.is_empty() {
            return Err(ModelError::Empty);
        }
        let curves: Vec<&[f64]> = samples.iter().map(|s| s.curve.as_slice()).collect();
        let mut tape = Tape::new(&self.params);
        let heads = self.record(&mut tape, Self::curves_tensor(&curves)?)?;
        let preds = self.predictions(&tape, &heads);
        let n = samples.len() as f64;
        let mut total = 0.0;
        let mut d_img = Vec::with_capacity(samples.len() * INPUT_LEN);
        let mut d_perm = Vec::with_capacity(samples.len());
        let mut d_q = Vec::with_capacity(samples.len() * 3);
        for (p, s) in preds.iter().zip(samples) {
            let l = total_loss(
                &p.image,
                p.permittivity,
                &p.quantity,
                &s.truth.image,
                s.truth.permittivity,
                &s.truth.quantity,
                weights,
            )?;
            total += l.loss / n;
            d_img.extend(l.d_image.iter().map(|g| g / n));
            d_perm.push(l.d_permittivity * self.config.permittivity_scale / n);
            d_q.extend(l.d_quantity.iter().map(|g| g / n));
        }
        let b = samples.len();
        let grads = tape.backward(&[
            (heads.image, Tensor::new(vec![b, 1, INPUT_LEN], d_img)?),
            (heads.permittivity, Tensor::new(vec![b, 1], d_perm)?),
            (heads.quantity, Tensor::new(vec![b, 3], d_q)?),
        ])?;
        Ok((total, preds, grads))
    }
}

#[cfg(test)]
mod tests;
