use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::postprocess::WINDOWS;
use crate::dataset::store::sha256_hex;
use crate::dataset::{DatasetConfig, PhysicsConfig, CONDITION_SEEDS};
use crate::model::{MultitaskConfig, TrainConfig};
use crate::surrogate::{SurrogateConfig, SurrogateTrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Five split conditions, fit-smooth inputs.
    #[default]
    Table1,
    /// The same five splits with linear interpolation.
    Table2,
    /// Detection-window ablation on the first condition.
    Table3,
    /// PSNR-form vs MSE-form image loss on the first condition.
    Table4,
    /// Forward surrogate plus the hybrid-data retraining experiment.
    Surrogate,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Table1,
        Experiment::Table2,
        Experiment::Table3,
        Experiment::Table4,
        Experiment::Surrogate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Table1 => "table1",
            Experiment::Table2 => "table2",
            Experiment::Table3 => "table3",
            Experiment::Table4 => "table4",
            Experiment::Surrogate => "surrogate",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSettings {
    pub model: SurrogateConfig,
    pub training: SurrogateTrainConfig,
    /// Seed of the 3:1:1 split.
    pub split_seed: u64,
    pub hybrid_fraction: f64,
    pub hybrid_seed: u64,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        Self {
            model: SurrogateConfig::default(),
            training: SurrogateTrainConfig::default(),
            split_seed: 7707,
            hybrid_fraction: 0.2,
            hybrid_seed: 8808,
        }
    }
}

/// Everything a suite run depends on. Serialised back verbatim next to its
/// outputs; the hash of that serialisation identifies the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub physics: PhysicsConfig,
    pub dataset: DatasetConfig,
    /// Windows visited by the window ablation, in order.
    pub windows: Vec<u32>,
    /// Split seeds, one per condition.
    pub conditions: Vec<u64>,
    pub model: MultitaskConfig,
    pub training: TrainConfig,
    pub surrogate: SurrogateSettings,
    /// Worker threads for dataset generation; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::default(),
            physics: PhysicsConfig::default(),
            dataset: DatasetConfig::default(),
            windows: WINDOWS.to_vec(),
            conditions: CONDITION_SEEDS.to_vec(),
            model: MultitaskConfig::default(),
            training: TrainConfig::default(),
            surrogate: SurrogateSettings::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        if self.dataset.samples == 0 {
            return Err(HarnessError::Config("dataset.samples must be positive".into()));
        }
        self.dataset.policy.validate().map_err(|e| bad(&e))?;
        self.physics.medium().map_err(|e| bad(&e))?;
        self.physics.illumination().map_err(|e| bad(&e))?;
        if let Some(w) = self.windows.iter().find(|w| !WINDOWS.contains(w)) {
            return Err(HarnessError::Config(format!("window {w} is not one of {WINDOWS:?}")));
        }
        if self.windows.is_empty() || self.conditions.is_empty() {
            return Err(HarnessError::Config("windows and conditions must be nonempty".into()));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::Config("threads must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.surrogate.hybrid_fraction) {
            return Err(HarnessError::Config("surrogate.hybrid_fraction outside [0, 1]".into()));
        }
        self.model.validate().map_err(|e| bad(&e))?;
        self.training.validate().map_err(|e| bad(&e))?;
        self.surrogate.model.validate().map_err(|e| bad(&e))?;
        Ok(())
    }

    /// Pretty JSON with every field resolved, as echoed into output
    /// directories.
    pub fn resolved_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    /// SHA-256 of [`resolved_json`](Self::resolved_json), hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(self.resolved_json().as_bytes())
    }
}
