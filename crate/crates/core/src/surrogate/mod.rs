//! Forward surrogate: predicts the network-input intensity curve from the
//! target labels, and substitutes its outputs into datasets.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::store::sha256_hex;
use crate::dataset::{Dataset, DatasetSplit, GroundTruth, HybridStamp, Provenance, Sample, INPUT_LEN};
use crate::model::loss::{image_term_grad, psnr_from_mse, ImageTerm};
use crate::model::train::{select, EpochRecord};
use crate::model::{
    default_decoder, default_encoder, dense_stack, mse, ModelError, ENCODING_CHANNELS, ENCODING_LEN, ENCODING_WIDTH,
};
use crate::nncore::{checkpoint, Activation, Adam, Gradients, LayerConfig, ParamStore, Sequential, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub image_branch: Vec<LayerConfig>,
    /// Widths of the quantity branch, starting at 3.
    pub quantity_branch: Vec<usize>,
    /// Widths of the permittivity branch, starting at 1.
    pub permittivity_branch: Vec<usize>,
    pub head: Vec<LayerConfig>,
    pub hidden_activation: Activation,
    /// Permittivity enters the branch as `(ε − offset)/scale`.
    pub permittivity_offset: f64,
    pub permittivity_scale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            image_branch: default_encoder(),
            quantity_branch: vec![3, 64, 64],
            permittivity_branch: vec![1, 64, 64],
            head: default_decoder(),
            hidden_activation: Activation::default(),
            permittivity_offset: 15.0,
            permittivity_scale: 5.0,
        }
    }
}

impl SurrogateConfig {
    pub fn fusion_inputs(&self) -> usize {
        ENCODING_WIDTH
            + self.quantity_branch.last().copied().unwrap_or(0)
            + self.permittivity_branch.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        let mut shape = vec![1, 1, INPUT_LEN];
        for l in &self.image_branch {
            shape = l.output_shape(&shape)?;
        }
        if shape != [1, ENCODING_CHANNELS, ENCODING_LEN] {
            return bad("image branch must map 1×701 to 256×3");
        }
        let mut shape = vec![1, ENCODING_CHANNELS, ENCODING_LEN];
        for l in &self.head {
            shape = l.output_shape(&shape)?;
        }
        if shape != [1, 1, INPUT_LEN] {
            return bad("head must map 256×3 to 1×701");
        }
        if self.quantity_branch.first() != Some(&3) || self.quantity_branch.len() < 2 {
            return bad("quantity branch must start at width 3");
        }
        if self.permittivity_branch.first() != Some(&1) || self.permittivity_branch.len() < 2 {
            return bad("permittivity branch must start at width 1");
        }
        if !(self.permittivity_scale.is_finite() && self.permittivity_scale != 0.0) {
            return bad("permittivity scale must be finite and nonzero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    pub config: SurrogateConfig,
    pub params: ParamStore,
    image_branch: Sequential,
    quantity_branch: Sequential,
    permittivity_branch: Sequential,
    fusion: Sequential,
    head: Sequential,
}

impl SurrogateNet {
    pub fn new(config: SurrogateConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let act = config.hidden_activation;
        let act_layer = Some(LayerConfig::Activation { activation: act });
        let image_branch = Sequential::build(&mut params, "image", &config.image_branch, act, act_layer, &mut rng);
        let quantity_branch = Sequential::build(
            &mut params,
            "quantity",
            &dense_stack(&config.quantity_branch),
            act,
            act_layer,
            &mut rng,
        );
        let permittivity_branch = Sequential::build(
            &mut params,
            "permittivity",
            &dense_stack(&config.permittivity_branch),
            act,
            act_layer,
            &mut rng,
        );
        let fusion = Sequential::build(
            &mut params,
            "fusion",
            &[LayerConfig::dense(config.fusion_inputs(), ENCODING_WIDTH)],
            act,
            act_layer,
            &mut rng,
        );
        let head = Sequential::build(&mut params, "head", &config.head, act, None, &mut rng);
        Ok(Self {
            config,
            params,
            image_branch,
            quantity_branch,
            permittivity_branch,
            fusion,
            head,
        })
    }

    pub fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "model": "surrogate", "config": self.config })
    }

    fn record(&self, tape: &mut Tape<'_>, truths: &[&GroundTruth]) -> Result<Var, ModelError> {
        let b = truths.len();
        let images: Vec<&[f64]> = truths.iter().map(|t| t.image.as_slice()).collect();
        let img = tape.input(Tensor::from_rows(&images)?)?;
        let q = tape.input(Tensor::new(
            vec![b, 3],
            truths.iter().flat_map(|t| t.quantity).collect(),
        )?)?;
        let eps = truths
            .iter()
            .map(|t| (t.permittivity - self.config.permittivity_offset) / self.config.permittivity_scale)
            .collect();
        let e = tape.input(Tensor::new(vec![b, 1], eps)?)?;
        let code = self.image_branch.forward(tape, img)?;
        let code = tape.reshape(code, vec![b, ENCODING_WIDTH])?;
        let q = self.quantity_branch.forward(tape, q)?;
        let e = self.permittivity_branch.forward(tape, e)?;
        let joined = tape.concat(&[code, q, e])?;
        let fused = self.fusion.forward(tape, joined)?;
        let fused = tape.reshape(fused, vec![b, ENCODING_CHANNELS, ENCODING_LEN])?;
        Ok(self.head.forward(tape, fused)?)
    }

    /// Unclamped outputs, one row per truth.
    pub fn forward_raw(&self, truths: &[&GroundTruth]) -> Result<Vec<Vec<f64>>, ModelError> {
        if truths.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new(&self.params);
        let out = self.record(&mut tape, truths)?;
        let v = tape.value(out);
        Ok((0..truths.len()).map(|i| v.row(i).to_vec()).collect())
    }

    /// Predicted curves with negative values clamped to zero.
    pub fn predict_batch(&self, truths: &[&GroundTruth]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut out = Vec::with_capacity(truths.len());
        for chunk in truths.chunks(64) {
            for mut row in self.forward_raw(chunk)? {
                for v in &mut row {
                    *v = v.max(0.0);
                }
                out.push(row);
            }
        }
        Ok(out)
    }

    pub fn predict(&self, truth: &GroundTruth) -> Result<Vec<f64>, ModelError> {
        Ok(self.predict_batch(&[truth])?.remove(0))
    }

    /// Mean `−PSNR + offset` over `samples` against their curves, with gradients.
    pub fn loss_and_gradients(
        &self,
        samples: &[&Sample],
        offset: f64,
    ) -> Result<(f64, Vec<f64>, Gradients), ModelError> {
        if samples.is_empty() {
            return Err(ModelError::Empty);
        }
        let truths: Vec<&GroundTruth> = samples.iter().map(|s| &s.truth).collect();
        let mut tape = Tape::new(&self.params);
        let out = self.record(&mut tape, &truths)?;
        let n = samples.len() as f64;
        let mut total = 0.0;
        let mut mses = Vec::with_capacity(samples.len());
        let mut seed = Vec::with_capacity(samples.len() * INPUT_LEN);
        let pred = tape.value(out);
        for (i, s) in samples.iter().enumerate() {
            let (l, g) = image_term_grad(pred.row(i), &s.curve, ImageTerm::Psnr, 1.0, -offset)?;
            // image_term_grad yields −(PSNR − offset) = −PSNR + offset.
            total += l / n;
            mses.push(mse(pred.row(i), &s.curve)?);
            seed.extend(g.iter().map(|v| v / n));
        }
        if !total.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        let seed = Tensor::new(pred.shape().to_vec(), seed)?;
        let grads = tape.backward(&[(out, seed)])?;
        Ok((total, mses, grads))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Adam,
    /// Constant added to `−PSNR`; gradient-inert.
    pub offset: f64,
    pub seed: u64,
}

impl Default for SurrogateTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 700,
            batch_size: 32,
            optimizer: Adam::default(),
            offset: 50.0,
            seed: 2,
        }
    }
}

/// Test-set quality of predicted curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// Mean of per-sample PSNR.
    pub mean_psnr_db: f64,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct SurrogateOutcome {
    pub net: SurrogateNet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

fn psnr_record(epoch: usize, split: &str, mses: &[f64], offset: f64) -> EpochRecord {
    let mean_psnr = mses.iter().map(|&m| psnr_from_mse(m)).sum::<f64>() / mses.len() as f64;
    EpochRecord {
        epoch,
        split: split.to_string(),
        psnr_db: mean_psnr,
        mse_permi: f64::NAN,
        mse_peak: f64::NAN,
        loss: offset - mean_psnr,
    }
}

/// 3:1:1 proportions, matching 3062/1019/1019 for 5100 samples.
pub fn surrogate_split(n: usize, seed: u64) -> Result<DatasetSplit, ModelError> {
    let hold = (n as f64 * 1019.0 / 5100.0).round() as usize;
    Ok(crate::dataset::split_with_counts(n, seed, hold, hold)?)
}

pub fn evaluate_surrogate(net: &SurrogateNet, samples: &[&Sample]) -> Result<SurrogateReport, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::Empty);
    }
    let truths: Vec<&GroundTruth> = samples.iter().map(|s| &s.truth).collect();
    let preds = net.predict_batch(&truths)?;
    let mut psnr_sum = 0.0;
    let mut mse_sum = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        let m = mse(p, &s.curve)?;
        psnr_sum += psnr_from_mse(m);
        mse_sum += m;
    }
    let n = samples.len() as f64;
    Ok(SurrogateReport {
        mean_psnr_db: psnr_sum / n,
        mse: mse_sum / n,
    })
}

pub fn train_surrogate(
    config: &SurrogateConfig,
    dataset: &Dataset,
    split: &DatasetSplit,
    hyper: &SurrogateTrainConfig,
) -> Result<SurrogateOutcome, ModelError> {
    if hyper.epochs == 0 || hyper.batch_size == 0 {
        return Err(ModelError::InvalidConfig(
            "epochs and batch size must be positive".into(),
        ));
    }
    let train_set = select(dataset, &split.train)?;
    let val_set = select(dataset, &split.val)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ModelError::Empty);
    }
    let mut net = SurrogateNet::new(config.clone(), hyper.seed)?;
    let mut opt = hyper.optimizer.clone();
    opt.steps = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5355_5252_4F47);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(2 * hyper.epochs);
    let mut best = (f64::NEG_INFINITY, 0, net.params.clone());
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut mses = Vec::with_capacity(train_set.len());
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train_set[i]).collect();
            let (_, m, grads) = net
                .loss_and_gradients(&batch, hyper.offset)
                .map_err(|_| ModelError::Divergence { epoch })?;
            net.params.zero_grad();
            net.params.accumulate(&grads.params);
            opt.step(&mut net.params)
                .map_err(|_| ModelError::Divergence { epoch })?;
            mses.extend(m);
        }
        history.push(psnr_record(epoch, "train", &mses, hyper.offset));
        let val = evaluate_surrogate(&net, &val_set)?;
        if !val.mean_psnr_db.is_finite() {
            return Err(ModelError::Divergence { epoch });
        }
        log::info!("surrogate epoch {epoch}: val psnr {:.2} dB", val.mean_psnr_db);
        history.push(EpochRecord {
            epoch,
            split: "val".into(),
            psnr_db: val.mean_psnr_db,
            mse_permi: f64::NAN,
            mse_peak: f64::NAN,
            loss: hyper.offset - val.mean_psnr_db,
        });
        if val.mean_psnr_db > best.0 {
            best = (val.mean_psnr_db, epoch, net.params.clone());
        }
    }
    net.params = best.2;
    Ok(SurrogateOutcome {
        net,
        history,
        best_epoch: best.1,
    })
}

pub fn save_surrogate(net: &SurrogateNet, path: &Path) -> Result<(), ModelError> {
    Ok(checkpoint::save_checkpoint(path, &net.architecture(), &net.params)?)
}

pub fn load_surrogate(path: &Path) -> Result<SurrogateNet, ModelError> {
    let (header, values) = checkpoint::load_checkpoint(path)?;
    let config: SurrogateConfig = header
        .architecture
        .get("config")
        .cloned()
        .and_then(|c| serde_json::from_value(c).ok())
        .ok_or_else(|| ModelError::InvalidConfig("checkpoint does not describe a surrogate".into()))?;
    let mut net = SurrogateNet::new(config, 0)?;
    checkpoint::restore_into(&header, &values, &mut net.params)?;
    Ok(net)
}

/// Replace the curves of `round(fraction·N)` randomly chosen samples with
/// surrogate predictions (renormalised to maximum 1). Labels and the stored
/// raw solver curves are left as they were.
pub fn synthesize_hybrid_dataset(
    real: &Dataset,
    surrogate: &SurrogateNet,
    fraction: f64,
    seed: u64,
) -> Result<Dataset, ModelError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ModelError::InvalidConfig(format!("fraction {fraction} outside [0, 1]")));
    }
    let n = real.len();
    let count = (fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut replaced = idx[..count].to_vec();
    replaced.sort_unstable();
    let mut out = real.clone();
    let truths: Vec<&GroundTruth> = replaced.iter().map(|&i| &real.samples[i].truth).collect();
    let curves = surrogate.predict_batch(&truths)?;
    for (&i, mut curve) in replaced.iter().zip(curves) {
        let peak = curve.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            for v in &mut curve {
                *v /= peak;
            }
        }
        let s = &mut out.samples[i];
        s.curve = curve;
        s.provenance = Provenance::Surrogate;
    }
    let ckpt = checkpoint::encode_checkpoint(&surrogate.architecture(), &surrogate.params);
    out.hybrid = Some(HybridStamp {
        fraction,
        seed,
        surrogate_checksum: sha256_hex(&ckpt),
        replaced,
    });
    Ok(out)
}

#[cfg(test)]
mod tests;
