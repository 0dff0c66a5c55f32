use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::score;
use super::train::{load_model, save_model};
use super::*;
use crate::dataset::{build_dataset, split_dataset, Dataset, DatasetConfig, PhysicsConfig};
use crate::nncore::gradcheck::max_relative_error;

fn corpus(n: usize) -> Dataset {
    let cfg = DatasetConfig {
        samples: n,
        seed: 99,
        ..DatasetConfig::default()
    };
    build_dataset(&PhysicsConfig::default(), &cfg, Some(1)).unwrap()
}

fn net() -> MultitaskNet {
    MultitaskNet::new(MultitaskConfig::default(), 4).unwrap()
}

#[test]
fn default_config_is_valid_and_shapes_hold() {
    let n = net();
    let p = n.predict(&vec![0.0; INPUT_LEN]).unwrap();
    assert_eq!(p.image.len(), INPUT_LEN);
    assert!(p.image.iter().all(|v| v.is_finite()) && p.permittivity.is_finite());
    assert!((p.quantity.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p.quantity.iter().all(|&q| q > 0.0));
}

#[test]
fn invalid_configs_rejected() {
    let mut c = MultitaskConfig::default();
    c.encoder[2] = crate::nncore::LayerConfig::conv(128, 256, 14, 6, 0);
    assert!(MultitaskNet::new(c, 0).is_err());
    let c = MultitaskConfig {
        classifier: vec![768, 4],
        ..MultitaskConfig::default()
    };
    assert!(MultitaskNet::new(c, 0).is_err());
    assert!(net().predict(&[0.0; 700]).is_err());
}

#[test]
fn forward_is_deterministic_and_locally_stable() {
    let n = net();
    let d = corpus(1);
    let c = &d.samples[0].curve;
    assert_eq!(n.predict(c).unwrap(), n.predict(c).unwrap());
    let nudged: Vec<f64> = c.iter().map(|v| v + 1e-13).collect();
    let (a, b) = (n.predict(c).unwrap(), n.predict(&nudged).unwrap());
    let diff = a
        .image
        .iter()
        .zip(&b.image)
        .map(|(x, y)| (x - y).abs())
        .chain([(a.permittivity - b.permittivity).abs()])
        .chain(a.quantity.iter().zip(&b.quantity).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn batched_and_single_predictions_agree() {
    let n = net();
    let d = corpus(3);
    let curves: Vec<&[f64]> = d.samples.iter().map(|s| s.curve.as_slice()).collect();
    let batch = n.predict_batch(&curves).unwrap();
    for (c, p) in curves.iter().zip(&batch) {
        let single = n.predict(c).unwrap();
        assert!(max_relative_error(&single.image, &p.image) < 1e-13);
    }
}

#[test]
fn composite_loss_gradcheck() {
    let d = corpus(3);
    let samples: Vec<&Sample> = d.samples.iter().collect();
    let mut n = net();
    let weights = LossWeights::default();
    let (_, _, grads) = n.loss_and_gradients(&samples, &weights).unwrap();
    let analytic_all: Vec<f64> = grads.params.iter().flat_map(|g| g.data().to_vec()).collect();
    // Probe a few coordinates of every parameter tensor.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut coords = Vec::new();
    let mut offset = 0;
    for p in n.params.params() {
        for _ in 0..4 {
            coords.push(offset + rng.gen_range(0..p.value.len()));
        }
        offset += p.value.len();
    }
    let base = n.params.flat_values();
    let eps = 1e-6;
    let mut numeric = Vec::new();
    for &i in &coords {
        let mut probe = base.clone();
        probe[i] = base[i] + eps;
        n.params.set_flat_values(&probe).unwrap();
        let up = n.loss_and_gradients(&samples, &weights).unwrap().0;
        probe[i] = base[i] - eps;
        n.params.set_flat_values(&probe).unwrap();
        let down = n.loss_and_gradients(&samples, &weights).unwrap().0;
        numeric.push((up - down) / (2.0 * eps));
    }
    let analytic: Vec<f64> = coords.iter().map(|&i| analytic_all[i]).collect();
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn offset_is_gradient_inert_and_weights_scale_linearly() {
    let d = corpus(3);
    let samples: Vec<&Sample> = d.samples.iter().collect();
    let n = net();
    let flat = |w: &LossWeights| -> (f64, Vec<f64>) {
        let (l, _, g) = n.loss_and_gradients(&samples, w).unwrap();
        (l, g.params.iter().flat_map(|t| t.data().to_vec()).collect())
    };
    let w = LossWeights::default();
    let (l1, g1) = flat(&w);
    let (l2, g2) = flat(&LossWeights { offset: 80.0, ..w });
    assert!((l2 - l1 + 30.0).abs() < 1e-9);
    assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    let scaled = LossWeights {
        alpha: 3.0,
        beta: 3.0,
        gamma: 3.0,
        ..w
    };
    let (_, g3) = flat(&scaled);
    let tripled: Vec<f64> = g1.iter().map(|g| 3.0 * g).collect();
    assert!(max_relative_error(&g3, &tripled) < 1e-12);
}

fn oracle(s: &Sample) -> Prediction {
    Prediction {
        image: s.truth.image.clone(),
        permittivity: s.truth.permittivity,
        quantity: s.truth.quantity,
    }
}

#[test]
fn perfect_predictions_score_perfectly() {
    let d = corpus(9);
    let samples: Vec<&Sample> = d.samples.iter().collect();
    let preds: Vec<Prediction> = samples.iter().map(|s| oracle(s)).collect();
    let m = score(&preds, &samples).unwrap();
    assert_eq!((m.acc_peak, m.acc_permi), (1.0, 1.0));
    assert_eq!((m.mse_image, m.mse_permi, m.mse_peak), (0.0, 0.0, 0.0));
    assert_eq!(m.psnr_db, loss::PSNR_CEILING);
}

#[test]
fn uniform_classifier_scores() {
    let d = corpus(12);
    let samples: Vec<&Sample> = d.samples.iter().collect();
    let preds: Vec<Prediction> = samples
        .iter()
        .map(|s| Prediction {
            quantity: [1.0 / 3.0; 3],
            ..oracle(s)
        })
        .collect();
    let m = score(&preds, &samples).unwrap();
    assert!((m.mse_peak - 2.0 / 9.0).abs() < 1e-15);
    // Exact ties resolve to one target.
    let singles = samples.iter().filter(|s| s.spec.count == 1).count() as f64;
    assert_eq!(m.acc_peak, singles / samples.len() as f64);
}

#[test]
fn permittivity_rounding_half_away_from_zero() {
    let d = corpus(1);
    let s = &d.samples[0];
    let t = s.truth.permittivity;
    let at = |v: f64| {
        let p = Prediction {
            permittivity: v,
            ..oracle(s)
        };
        score(&[p], &[s]).unwrap().acc_permi
    };
    assert_eq!(at(t - 0.5), 1.0);
    assert_eq!(at(t + 0.49), 1.0);
    assert_eq!(at(t + 0.5), 0.0);
}

#[test]
fn evaluation_is_permutation_invariant() {
    let d = corpus(10);
    let n = net();
    let mut samples: Vec<&Sample> = d.samples.iter().collect();
    let a = evaluate(&n, &samples).unwrap();
    samples.reverse();
    samples.swap(2, 7);
    let b = evaluate(&n, &samples).unwrap();
    for (x, y) in [
        (a.psnr_db, b.psnr_db),
        (a.mse_image, b.mse_image),
        (a.mse_permi, b.mse_permi),
        (a.mse_peak, b.mse_peak),
        (a.acc_peak, b.acc_peak),
        (a.acc_permi, b.acc_permi),
    ] {
        assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
    }
    assert!(matches!(evaluate(&n, &[]), Err(ModelError::Empty)));
}

#[test]
fn smoke_training_reduces_loss_and_is_reproducible() {
    let d = corpus(50);
    let split = split_dataset(d.len(), 3).unwrap();
    let hyper = TrainConfig {
        epochs: 50,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let out = train(&MultitaskConfig::default(), &d, &split, &hyper).unwrap();
    let train_losses: Vec<f64> = out
        .history
        .iter()
        .filter(|r| r.split == "train")
        .map(|r| r.loss)
        .collect();
    assert_eq!(train_losses.len(), 50);
    assert!(train_losses[49] < train_losses[0], "{train_losses:?}");

    let short = TrainConfig { epochs: 3, ..hyper };
    let a = train(&MultitaskConfig::default(), &d, &split, &short).unwrap();
    let b = train(&MultitaskConfig::default(), &d, &split, &short).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&a.net, &dir.path().join("a.ckpt")).unwrap();
    save_model(&b.net, &dir.path().join("b.ckpt")).unwrap();
    let bytes_a = std::fs::read(dir.path().join("a.ckpt")).unwrap();
    assert_eq!(bytes_a, std::fs::read(dir.path().join("b.ckpt")).unwrap());
    let restored = load_model(&dir.path().join("a.ckpt")).unwrap();
    assert_eq!(restored.params.flat_values(), a.net.params.flat_values());
}

proptest! {
    #[test]
    fn psnr_mse_identity(values in proptest::collection::vec(0.0f64..1.0, 8), shift in 1e-5f64..0.5) {
        let truth = values.clone();
        let image: Vec<f64> = values.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { shift } else { -shift / 3.0 }).collect();
        let m = mse(&image, &truth).unwrap();
        prop_assume!(m >= 1e-12);
        prop_assert!((psnr(&image, &truth).unwrap() + 10.0 * m.log10()).abs() < 1e-12);
    }
}
