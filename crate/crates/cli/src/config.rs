//! Run configuration: built-in defaults, then a JSON file, then flags.

use std::path::{Path, PathBuf};

use csp_core::csp::{CspConfig, PretrainStrategy, RedrawPolicy};
use csp_core::fsutil::read_file;
use csp_core::train::{AdamWConfig, ScheduleConfig, TrainConfig};
use csp_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Baseline,
    Csp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: StrategyKind,
    /// Model input channels produced by CSP; defaults to the model's.
    pub n: Option<usize>,
    pub seed: u64,
    pub redraw: RedrawPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Defaults to the data channel count (or `strategy.n`).
    pub input_channels: Option<usize>,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingSection {
    /// Defaults to `train.patch`.
    pub patch: Option<usize>,
    /// Defaults to the patch size.
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    pub manifest: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: StrategySection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub schedule: ScheduleConfig,
    pub adamw: AdamWConfig,
    pub bands: Option<Vec<String>>,
    pub tiling: TilingSection,
    pub paths: PathSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl RunConfig {
    pub fn defaults(phase: Phase) -> Self {
        let (train, schedule) = match phase {
            Phase::Pretrain => (TrainConfig::pretrain_default(), ScheduleConfig::pretrain_default()),
            Phase::Finetune => (TrainConfig::finetune_default(), ScheduleConfig::finetune_default()),
        };
        Self {
            strategy: StrategySection {
                kind: StrategyKind::Baseline,
                n: None,
                seed: 0,
                redraw: RedrawPolicy::default(),
            },
            model: ModelSection { input_channels: None, width: csp_core::model::DEFAULT_WIDTH },
            train,
            schedule,
            adamw: AdamWConfig::default(),
            bands: None,
            tiling: TilingSection { patch: None, stride: None },
            paths: PathSection::default(),
        }
    }

    /// Defaults overlaid with the JSON object in `path`. Also reports whether
    /// the file fixed `schedule.total` itself.
    pub fn load(phase: Phase, path: Option<&Path>) -> Result<(Self, bool)> {
        let defaults = Self::defaults(phase);
        let Some(path) = path else {
            return Ok((defaults, false));
        };
        let text = read_file(path)?;
        let overlay: Value =
            serde_json::from_slice(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let explicit_total = overlay.pointer("/schedule/total").is_some();
        let mut merged = serde_json::to_value(&defaults).expect("defaults serialize");
        merge(&mut merged, overlay);
        let cfg =
            serde_json::from_value(merged).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Ok((cfg, explicit_total))
    }

    /// Pre-training strategy for data with `m` channels, cross-checked
    /// against the model input width.
    pub fn pretrain_strategy(&self, m: usize) -> Result<(PretrainStrategy, usize)> {
        let strategy = match self.strategy.kind {
            StrategyKind::Baseline => PretrainStrategy::Baseline,
            StrategyKind::Csp => {
                let n = self.strategy.n.or(self.model.input_channels).unwrap_or(m);
                PretrainStrategy::Csp(CspConfig::new(m, n, self.strategy.seed)?.with_redraw(self.strategy.redraw))
            }
        };
        let channels = self.model.input_channels.unwrap_or_else(|| strategy.model_channels(m));
        if let (StrategyKind::Csp, Some(n)) = (self.strategy.kind, self.strategy.n) {
            if n != channels {
                return Err(Error::config(
                    "strategy.n",
                    format!("CSP-{n} does not match model.input_channels = {channels}"),
                ));
            }
        }
        strategy.validate(m, channels)?;
        Ok((strategy, channels))
    }
}

/// Recursively overlays `b` onto `a`; objects merge key by key, anything
/// else replaces.
pub fn merge(a: &mut Value, b: Value) {
    match (a, b) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                match a.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        a.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
