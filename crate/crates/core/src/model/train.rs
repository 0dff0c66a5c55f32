use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss, LossWeights};
use super::metrics::{predict_all, score};
use super::{ModelError, MultitaskConfig, MultitaskNet, Prediction};
use crate::dataset::{Dataset, DatasetSplit, Sample};
use crate::nncore::{checkpoint, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Adam,
    pub weights: LossWeights,
    /// Seeds initialisation and minibatch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 700,
            batch_size: 32,
            optimizer: Adam::default(),
            weights: LossWeights::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.optimizer.rate > 0.0 && self.optimizer.rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning rate must be positive".into()));
        }
        self.weights.validate()
    }
}

/// One row of `train_log.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub psnr_db: f64,
    pub mse_permi: f64,
    pub mse_peak: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: MultitaskNet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

pub fn mean_loss(preds: &[Prediction], samples: &[&Sample], weights: &LossWeights) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        total += total_loss(
            &p.image,
            p.permittivity,
            &p.quantity,
            &s.truth.image,
            s.truth.permittivity,
            &s.truth.quantity,
            weights,
        )?
        .loss;
    }
    Ok(total / samples.len() as f64)
}

fn record(
    epoch: usize,
    split: &str,
    preds: &[Prediction],
    samples: &[&Sample],
    loss: f64,
) -> Result<EpochRecord, ModelError> {
    let m = score(preds, samples)?;
    Ok(EpochRecord {
        epoch,
        split: split.to_string(),
        psnr_db: m.psnr_db,
        mse_permi: m.mse_permi,
        mse_peak: m.mse_peak,
        loss,
    })
}

pub fn select<'a>(dataset: &'a Dataset, indices: &[usize]) -> Result<Vec<&'a Sample>, ModelError> {
    indices
        .iter()
        .map(|&i| {
            dataset.samples.get(i).ok_or(ModelError::Length {
                expected: dataset.len(),
                got: i,
            })
        })
        .collect()
}

/// Train from scratch. Training metrics are accumulated from the minibatch
/// forward passes during each epoch; validation metrics come from a full pass
/// after it.
pub fn train(
    config: &MultitaskConfig,
    dataset: &Dataset,
    split: &DatasetSplit,
    hyper: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    hyper.validate()?;
    let train_set = select(dataset, &split.train)?;
    let val_set = select(dataset, &split.val)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ModelError::Empty);
    }
    let mut net = MultitaskNet::new(config.clone(), hyper.seed)?;
    let mut opt = hyper.optimizer.clone();
    opt.steps = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x0053_4855_4646_4C45);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(2 * hyper.epochs);
    let mut best = (f64::INFINITY, 0, net.params.clone());

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut seen: Vec<&Sample> = Vec::with_capacity(train_set.len());
        let mut preds = Vec::with_capacity(train_set.len());
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| train_set[i]).collect();
            let (loss, p, grads) = match net.loss_and_gradients(&batch, &hyper.weights) {
                Ok(r) => r,
                Err(ModelError::NonFiniteLoss | ModelError::Nn(_)) => return Err(ModelError::Divergence { epoch }),
                Err(e) => return Err(e),
            };
            net.params.zero_grad();
            net.params.accumulate(&grads.params);
            opt.step(&mut net.params)
                .map_err(|_| ModelError::Divergence { epoch })?;
            loss_sum += loss * batch.len() as f64;
            seen.extend(batch);
            preds.extend(p);
        }
        let train_loss = loss_sum / seen.len() as f64;
        history.push(record(epoch, "train", &preds, &seen, train_loss)?);

        let val_preds = predict_all(&net, &val_set).map_err(|_| ModelError::Divergence { epoch })?;
        let val_loss = mean_loss(&val_preds, &val_set, &hyper.weights).map_err(|_| ModelError::Divergence { epoch })?;
        let val = record(epoch, "val", &val_preds, &val_set, val_loss)?;
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4}, val loss {val_loss:.4}, val psnr {:.2} dB",
            val.psnr_db
        );
        history.push(val);
        if val_loss < best.0 {
            best = (val_loss, epoch, net.params.clone());
        }
    }
    net.params = best.2;
    Ok(TrainOutcome {
        net,
        history,
        best_epoch: best.1,
    })
}

pub fn train_log_csv(history: &[EpochRecord]) -> String {
    // Metrics a model does not produce are left empty.
    let field = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
    let mut s = String::from("epoch,split,psnr_db,mse_permi,mse_peak,loss\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch,
            r.split,
            field(r.psnr_db),
            field(r.mse_permi),
            field(r.mse_peak),
            field(r.loss)
        );
    }
    s
}

pub fn write_train_log(path: &Path, history: &[EpochRecord]) -> Result<(), ModelError> {
    std::fs::write(path, train_log_csv(history)).map_err(|e| ModelError::Io(path.display().to_string(), e))
}

pub fn save_model(net: &MultitaskNet, path: &Path) -> Result<(), ModelError> {
    Ok(checkpoint::save_checkpoint(path, &net.architecture(), &net.params)?)
}

pub fn load_model(path: &Path) -> Result<MultitaskNet, ModelError> {
    let (header, values) = checkpoint::load_checkpoint(path)?;
    let config: MultitaskConfig = header
        .architecture
        .get("config")
        .cloned()
        .and_then(|c| serde_json::from_value(c).ok())
        .ok_or_else(|| ModelError::InvalidConfig("checkpoint does not describe a multitask model".into()))?;
    let mut net = MultitaskNet::new(config, 0)?;
    checkpoint::restore_into(&header, &values, &mut net.params)?;
    Ok(net)
}
