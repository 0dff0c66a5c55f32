//! Scene sampling, label rendering, curve post-processing and persistence.

pub mod airy;
pub mod postprocess;
pub mod scene;
pub mod split;
pub mod store;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::illumination::{make_floquet_illumination, IlluminationError, IlluminationPattern, MediumParams};
use crate::scatter::{sample_intensity_curve, solve_scene, Cylinder, DetectionLine, ScatterError, Scene};
pub use airy::{render_airy_image, uniform_grid};
pub use postprocess::{postprocess_curve, window_slice, InterpMode, PostProcessPolicy, INPUT_LEN};
pub use scene::{sample_scene, QuotaPolicy, SceneSpec};
pub use split::{split_dataset, split_with_counts, DatasetSplit, CONDITION_SEEDS};
pub use store::{load_dataset, load_split, save_dataset, save_split};

/// Raw samples along the full detection line.
pub const RAW_LEN: usize = 21;
const MAX_SCENE_ATTEMPTS: u64 = 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("rejection sampling gave up after {tries} tries for {count} targets")]
    RejectionExhausted { count: usize, tries: usize },
    #[error("window {0}λ not one of 10, 7, 5, 3")]
    Window(u32),
    #[error("raw curve has {got} points, expected {expected}")]
    RawLength { expected: usize, got: usize },
    #[error("curve has no positive maximum")]
    DegenerateCurve,
    #[error(transparent)]
    Illumination(#[from] IlluminationError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error("sample {index}: solver failed on every attempt: {source}")]
    Solver { index: usize, source: ScatterError },
    #[error("dataset is empty")]
    Empty,
    #[error("I/O on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed dataset file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Physical set-up; lengths in wavelengths unless stated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub frequency_hz: f64,
    pub period_m: f64,
    pub orders: Vec<i32>,
    pub amplitudes_re: Vec<f64>,
    pub amplitudes_im: Vec<f64>,
    pub radius: f64,
    /// Gap between the cylinder bottom and the surface plane.
    pub standoff: f64,
    /// Detection line height above the surface plane.
    pub detection_height: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            frequency_hz: crate::illumination::DEFAULT_FREQUENCY_HZ,
            period_m: crate::illumination::DEFAULT_PERIOD_M,
            orders: vec![-1, 0, 1],
            amplitudes_re: vec![0.8, 1.0, 0.8],
            amplitudes_im: vec![0.0, 0.0, 0.0],
            radius: 0.05,
            standoff: 0.01,
            detection_height: 1.3,
        }
    }
}

impl PhysicsConfig {
    pub fn medium(&self) -> Result<MediumParams, DatasetError> {
        Ok(MediumParams::from_frequency(self.frequency_hz)?)
    }

    pub fn illumination(&self) -> Result<IlluminationPattern, DatasetError> {
        if self.amplitudes_re.len() != self.amplitudes_im.len() {
            return Err(IlluminationError::LengthMismatch {
                orders: self.amplitudes_re.len(),
                amplitudes: self.amplitudes_im.len(),
            }
            .into());
        }
        let amps: Vec<Complex64> = self
            .amplitudes_re
            .iter()
            .zip(&self.amplitudes_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        Ok(make_floquet_illumination(
            self.period_m,
            self.medium()?,
            &self.orders,
            &amps,
        )?)
    }

    pub fn detection_line(&self) -> Result<DetectionLine, DatasetError> {
        let medium = self.medium()?;
        let mut line = DetectionLine::standard(&medium);
        line.y = self.detection_height * medium.wavelength;
        Ok(line)
    }

    pub fn scene(&self, spec: &SceneSpec) -> Result<Scene, DatasetError> {
        spec.validate()?;
        let lam = self.medium()?.wavelength;
        let radius = self.radius * lam;
        let cylinders = spec
            .positions
            .iter()
            .map(|&x| Cylinder {
                center: [x * lam, radius + self.standoff * lam],
                radius,
                permittivity: spec.permittivity as f64,
            })
            .collect();
        Ok(Scene::new(cylinders, self.illumination()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub samples: usize,
    pub seed: u64,
    pub policy: PostProcessPolicy,
    /// Additive Gaussian noise on raw curves, relative to their maximum.
    pub noise_sigma: f64,
    pub quota: QuotaPolicy,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples: 5100,
            seed: 20_230_517,
            policy: PostProcessPolicy::default(),
            noise_sigma: 0.0,
            quota: QuotaPolicy::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub quantity: [f64; 3],
    pub permittivity: f64,
    pub image: Vec<f64>,
}

impl GroundTruth {
    /// Labels for `spec`, the image rendered over the detection window.
    pub fn from_spec(spec: &SceneSpec, window: u32) -> Self {
        Self {
            quantity: spec.one_hot(),
            permittivity: spec.permittivity as f64,
            image: render_airy_image(spec, &image_grid(window)),
        }
    }

    pub fn count(&self) -> usize {
        self.quantity.iter().position(|&q| q == 1.0).map_or(0, |i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Solver,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub scene_seed: u64,
    pub spec: SceneSpec,
    /// Full-line 21-point intensity, normalised to maximum 1.
    pub raw: Vec<f64>,
    /// Network input, 701 points for the dataset's policy.
    pub curve: Vec<f64>,
    pub truth: GroundTruth,
    pub provenance: Provenance,
}

/// Record of surrogate substitution in a hybrid dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridStamp {
    pub fraction: f64,
    pub seed: u64,
    /// SHA-256 of the surrogate checkpoint used.
    pub surrogate_checksum: String,
    pub replaced: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub physics: PhysicsConfig,
    pub config: DatasetConfig,
    pub samples: Vec<Sample>,
    pub hybrid: Option<HybridStamp>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same scenes with inputs re-derived from the raw curves under `policy`.
    pub fn with_policy(&self, policy: PostProcessPolicy) -> Result<Dataset, DatasetError> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let curve = postprocess_curve(window_slice(&s.raw, &policy)?, &policy)?.values;
                let truth = if policy.window == self.config.policy.window {
                    s.truth.clone()
                } else {
                    GroundTruth::from_spec(&s.spec, policy.window)
                };
                Ok(Sample {
                    curve,
                    truth,
                    ..s.clone()
                })
            })
            .collect::<Result<_, DatasetError>>()?;
        let mut config = self.config.clone();
        config.policy = policy;
        Ok(Dataset {
            physics: self.physics.clone(),
            config,
            samples,
            hybrid: self.hybrid.clone(),
        })
    }

    pub fn count_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for s in &self.samples {
            h[s.spec.count - 1] += 1;
        }
        h
    }
}

/// The 701-point image grid spanning a `window`-wavelength detection window.
pub fn image_grid(window: u32) -> Vec<f64> {
    uniform_grid(window as f64, INPUT_LEN)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sample `index`, attempt `attempt`; independent of generation order.
pub fn sample_seed(global: u64, index: usize, attempt: u64) -> u64 {
    splitmix64(global ^ splitmix64((index as u64) ^ (attempt << 40)))
}

/// Full-line raw curve for one scene spec.
pub fn simulate_raw(physics: &PhysicsConfig, spec: &SceneSpec) -> Result<Vec<f64>, DatasetError> {
    let scene = physics.scene(spec)?;
    let solution = solve_scene(&scene)?;
    Ok(sample_intensity_curve(&scene, &solution, &physics.detection_line()?)?.values)
}

fn add_noise(raw: &mut [f64], sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x006E_6F69_7365));
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for v in raw.iter_mut() {
        *v = (*v + normal.sample(&mut rng)).max(0.0);
    }
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        for v in raw.iter_mut() {
            *v /= peak;
        }
    }
}

fn build_sample(physics: &PhysicsConfig, config: &DatasetConfig, index: usize) -> Result<Sample, DatasetError> {
    let mut last_err = None;
    for attempt in 0..MAX_SCENE_ATTEMPTS {
        let scene_seed = sample_seed(config.seed, index, attempt);
        let spec = sample_scene(scene_seed, config.quota)?;
        match simulate_raw(physics, &spec) {
            Ok(mut raw) => {
                add_noise(&mut raw, config.noise_sigma, scene_seed);
                let curve = postprocess_curve(window_slice(&raw, &config.policy)?, &config.policy)?.values;
                return Ok(Sample {
                    index,
                    scene_seed,
                    truth: GroundTruth::from_spec(&spec, config.policy.window),
                    spec,
                    raw,
                    curve,
                    provenance: Provenance::Solver,
                });
            }
            Err(DatasetError::Scatter(e)) => {
                log::warn!("sample {index} attempt {attempt} (seed {scene_seed}): {e}; resampling");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(DatasetError::Solver {
        index,
        source: last_err.expect("at least one attempt ran"),
    })
}

/// Generate `config.samples` samples. `threads = None` uses the ambient rayon
/// pool; results are identical for any worker count.
pub fn build_dataset(
    physics: &PhysicsConfig,
    config: &DatasetConfig,
    threads: Option<usize>,
) -> Result<Dataset, DatasetError> {
    config.policy.validate()?;
    physics.illumination()?;
    let run = || {
        (0..config.samples)
            .into_par_iter()
            .map(|i| build_sample(physics, config, i))
            .collect::<Result<Vec<_>, _>>()
    };
    let samples = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| DatasetError::Pool(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(Dataset {
        physics: physics.clone(),
        config: config.clone(),
        samples,
        hybrid: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> DatasetConfig {
        DatasetConfig {
            samples: n,
            seed: 7,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn samples_satisfy_invariants() {
        let d = build_dataset(&PhysicsConfig::default(), &small(24), Some(1)).unwrap();
        assert_eq!(d.len(), 24);
        for s in &d.samples {
            s.spec.validate().unwrap();
            assert_eq!(s.truth.count(), s.spec.count);
            assert_eq!(s.truth.quantity.iter().sum::<f64>(), 1.0);
            assert_eq!(s.truth.image.iter().cloned().fold(0.0, f64::max), 1.0);
            assert!(s.truth.image.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(s.curve.len(), INPUT_LEN);
            assert_eq!(s.raw.len(), RAW_LEN);
            assert!(s.curve.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            assert_eq!(s.curve.iter().cloned().fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let a = build_dataset(&PhysicsConfig::default(), &small(10), Some(1)).unwrap();
        let b = build_dataset(&PhysicsConfig::default(), &small(10), Some(3)).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn noise_hook_perturbs_but_keeps_normalisation() {
        let mut cfg = small(4);
        cfg.noise_sigma = 0.02;
        let noisy = build_dataset(&PhysicsConfig::default(), &cfg, Some(1)).unwrap();
        let clean = build_dataset(&PhysicsConfig::default(), &small(4), Some(1)).unwrap();
        for (n, c) in noisy.samples.iter().zip(&clean.samples) {
            assert_eq!(n.spec, c.spec);
            assert_ne!(n.raw, c.raw);
            assert_eq!(n.raw.iter().cloned().fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn policy_switch_keeps_labels() {
        let d = build_dataset(&PhysicsConfig::default(), &small(3), Some(1)).unwrap();
        let lin = d
            .with_policy(PostProcessPolicy {
                mode: InterpMode::LinearInterp,
                window: 5,
            })
            .unwrap();
        for (a, b) in d.samples.iter().zip(&lin.samples) {
            assert_eq!(a.truth.quantity, b.truth.quantity);
            assert_eq!(a.truth.image.len(), b.truth.image.len());
            assert_ne!(a.truth.image, b.truth.image);
            assert_ne!(a.curve, b.curve);
        }
        let same_window = d
            .with_policy(PostProcessPolicy {
                mode: InterpMode::LinearInterp,
                window: 10,
            })
            .unwrap();
        assert_eq!(same_window.samples[0].truth, d.samples[0].truth);
    }

    #[test]
    fn seeds_are_order_independent() {
        assert_eq!(sample_seed(1, 5, 0), sample_seed(1, 5, 0));
        assert_ne!(sample_seed(1, 5, 0), sample_seed(1, 6, 0));
        assert_ne!(sample_seed(1, 5, 0), sample_seed(1, 5, 1));
        assert_ne!(sample_seed(1, 5, 0), sample_seed(2, 5, 0));
    }
}
