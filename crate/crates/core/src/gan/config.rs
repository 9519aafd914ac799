use serde::{Deserialize, Serialize};
use slicegan_tensor::AdamConfig;

use crate::error::{Error, Result};
use crate::network::GanArch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanTrainConfig {
    /// One epoch is one batch.
    pub max_epochs: usize,
    /// Training stops after this epoch when set.
    pub early_stop_epoch: Option<usize>,
    pub batch_size: usize,
    /// Epochs after which the fixed-noise generation is recorded.
    pub snapshot_epochs: Vec<usize>,
    pub d_steps: usize,
    pub g_steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub arch: GanArch,
    /// Derived from the run seed; never read from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl GanTrainConfig {
    /// 64x64 slices, 500-dimensional noise, 20000 epochs stopping at 8000.
    pub fn full() -> Self {
        let adam = AdamConfig::gan();
        GanTrainConfig {
            max_epochs: 20_000,
            early_stop_epoch: Some(8_000),
            batch_size: 16,
            snapshot_epochs: vec![1, 50, 1000, 10_000],
            d_steps: 1,
            g_steps: 1,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            arch: GanArch::full(500),
            seed: 0,
        }
    }

    /// 16x16 slices and a few thousand epochs.
    pub fn desk() -> Self {
        GanTrainConfig {
            max_epochs: 2000,
            early_stop_epoch: None,
            snapshot_epochs: vec![1, 50, 200, 500, 1000, 2000],
            arch: GanArch::desk(),
            ..GanTrainConfig::full()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::gan()
        }
    }

    /// Epochs actually trained.
    pub fn trained_epochs(&self) -> usize {
        self.early_stop_epoch.map_or(self.max_epochs, |e| e.min(self.max_epochs))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_epochs == 0 || self.batch_size == 0 || self.d_steps == 0 || self.g_steps == 0 {
            return bad("epochs, batch size and step counts must be positive".into());
        }
        if let Some(e) = self.snapshot_epochs.iter().find(|&&e| e == 0 || e > self.max_epochs) {
            return bad(format!("snapshot epoch {e} outside 1..={}", self.max_epochs));
        }
        if let Some(stop) = self.early_stop_epoch {
            if stop == 0 || stop > self.max_epochs {
                return bad(format!("early stop epoch {stop} outside 1..={}", self.max_epochs));
            }
        }
        if !(self.learning_rate > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("adam hyperparameters out of range".into());
        }
        self.arch.validate()
    }
}
