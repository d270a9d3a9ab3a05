use serde::{Deserialize, Serialize};

use crate::data::augment::{AugmentConfig, DEFAULT_SCALES};
use crate::error::{Error, Result};

/// Loop settings shared by pre-training (epoch-driven) and fine-tuning
/// (iteration-driven).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Pre-training length.
    pub epochs: u64,
    /// Fine-tuning length.
    pub iterations: u64,
    pub seed: u64,
    /// Training crop size; a positive multiple of 4.
    pub patch: usize,
    pub scales: Vec<f64>,
    pub flip_prob: f64,
    /// Checkpoint cadence in epochs (pre-training) or iterations
    /// (fine-tuning); 0 disables intermediate checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Validation cadence in iterations for fine-tuning; 0 evaluates only at the end.
    #[serde(default)]
    pub eval_every: u64,
    /// Per-iteration log cadence; 0 logs only epoch or evaluation records.
    #[serde(default)]
    pub log_every: u64,
}

impl TrainConfig {
    pub fn pretrain_default() -> Self {
        Self {
            batch_size: 128,
            epochs: 300,
            iterations: 0,
            seed: 0,
            patch: 224,
            scales: DEFAULT_SCALES.to_vec(),
            flip_prob: 0.5,
            checkpoint_every: 0,
            eval_every: 0,
            log_every: 0,
        }
    }

    pub fn finetune_default() -> Self {
        Self { batch_size: 16, epochs: 0, iterations: 10_000, patch: 512, ..Self::pretrain_default() }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig { crop: self.patch, scales: self.scales.clone(), flip_prob: self.flip_prob }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.patch == 0 || !self.patch.is_multiple_of(4) {
            return Err(Error::config("train.patch", format!("patch {} must be a positive multiple of 4", self.patch)));
        }
        self.augment().validate()
    }
}
