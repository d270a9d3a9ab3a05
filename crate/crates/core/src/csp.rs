//! Channel shuffling pre-training (CSP).
//!
//! An `m`-channel image is turned into an `n`-channel model input by stacking
//! `x = ceil(n/m)` copies of its channels into a deck, shuffling the deck with
//! Fisher-Yates, and keeping the first `n` entries. Every output plane is a
//! bitwise copy of some input plane; only the order (and multiplicity) of the
//! channels is randomized, so the model cannot rely on a fixed spectral order.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::RasterImage;
use crate::error::{Error, Result};
use crate::rng::{mix64, rng_from_seed};

/// Smallest `x` with `x·m ≥ n`.
pub fn duplication_factor(m: usize, n: usize) -> Result<usize> {
    if m < 1 {
        return Err(Error::config("m", "source channel count must be at least 1"));
    }
    if n < 1 {
        return Err(Error::config("n", "target channel count must be at least 1"));
    }
    Ok(n.div_ceil(m))
}

/// How often a fresh plan is drawn for a given sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedrawPolicy {
    /// New plan for every `(epoch, sample_index)`.
    #[default]
    PerSample,
    /// One plan per sample, reused across epochs.
    FixedPerImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CspConfig {
    pub m: usize,
    pub n: usize,
    pub global_seed: u64,
    #[serde(default)]
    pub redraw: RedrawPolicy,
}

impl CspConfig {
    pub fn new(m: usize, n: usize, global_seed: u64) -> Result<Self> {
        duplication_factor(m, n)?;
        Ok(Self { m, n, global_seed, redraw: RedrawPolicy::PerSample })
    }

    pub fn with_redraw(mut self, redraw: RedrawPolicy) -> Self {
        self.redraw = redraw;
        self
    }

    pub fn duplication_factor(&self) -> Result<usize> {
        duplication_factor(self.m, self.n)
    }

    fn seed_for(&self, key: DrawKey) -> u64 {
        let epoch = match self.redraw {
            RedrawPolicy::PerSample => key.epoch,
            RedrawPolicy::FixedPerImage => 0,
        };
        mix64(self.global_seed, epoch, key.sample_index)
    }
}

/// Identifies one draw: the plan is a pure function of the config and this key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DrawKey {
    pub epoch: u64,
    pub sample_index: u64,
}

impl DrawKey {
    pub fn new(epoch: u64, sample_index: u64) -> Self {
        Self { epoch, sample_index }
    }
}

/// Ordered source-channel index for each of the `n` model inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelPlan {
    sources: Vec<usize>,
}

impl ChannelPlan {
    pub fn new(sources: Vec<usize>, m: usize) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::config("plan", "empty channel plan"));
        }
        if let Some(&bad) = sources.iter().find(|&&s| s >= m) {
            return Err(Error::config("plan", format!("source {bad} out of range for {m} channels")));
        }
        Ok(Self { sources })
    }

    /// Unshuffled deck order truncated to `n`: `[0, 1, …, m−1, 0, 1, …]`.
    pub fn natural(m: usize, n: usize) -> Result<Self> {
        duplication_factor(m, n)?;
        Ok(Self { sources: (0..n).map(|i| i % m).collect() })
    }

    /// Maps output channel `j` to input channel `perm[j]`; `perm` must be a
    /// bijection on `0..perm.len()`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::config("permutation", format!("{perm:?} is not a bijection")));
            }
        }
        Self::new(perm.to_vec(), perm.len().max(1))
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// How many times each of the `m` source channels is used.
    pub fn counts(&self, m: usize) -> Vec<usize> {
        let mut counts = vec![0; m];
        for &s in &self.sources {
            counts[s] += 1;
        }
        counts
    }

    /// Composes a channel plan with a preceding permutation of the source.
    pub fn after(&self, first: &ChannelPlan) -> ChannelPlan {
        ChannelPlan { sources: self.sources.iter().map(|&s| first.sources[s]).collect() }
    }
}

impl fmt::Display for ChannelPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sources.iter().map(usize::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Source of swap positions for Fisher-Yates.
pub trait ShuffleSource {
    /// Returns an index in `0..=upper`.
    fn pick(&mut self, upper: usize) -> usize;
}

/// Uniform picks from a random generator.
pub struct RngShuffle<R>(pub R);

impl<R: Rng> ShuffleSource for RngShuffle<R> {
    fn pick(&mut self, upper: usize) -> usize {
        self.0.random_range(0..=upper)
    }
}

/// Never swaps; the deck keeps its construction order.
pub struct IdentityShuffle;

impl ShuffleSource for IdentityShuffle {
    fn pick(&mut self, upper: usize) -> usize {
        upper
    }
}

pub fn fisher_yates<V>(deck: &mut [V], source: &mut impl ShuffleSource) {
    for i in (1..deck.len()).rev() {
        let j = source.pick(i);
        deck.swap(i, j);
    }
}

/// Builds the `x`-fold deck, shuffles it with `source` and keeps `n` entries.
pub fn draw_channel_plan_with(cfg: &CspConfig, source: &mut impl ShuffleSource) -> Result<ChannelPlan> {
    let x = cfg.duplication_factor()?;
    let mut deck: Vec<usize> = (0..x).flat_map(|_| 0..cfg.m).collect();
    fisher_yates(&mut deck, source);
    deck.truncate(cfg.n);
    Ok(ChannelPlan { sources: deck })
}

pub fn draw_channel_plan(cfg: &CspConfig, key: DrawKey) -> Result<ChannelPlan> {
    let mut source = RngShuffle(rng_from_seed(cfg.seed_for(key)));
    draw_channel_plan_with(cfg, &mut source)
}

pub fn apply_plan(image: &RasterImage, plan: &ChannelPlan) -> Result<RasterImage> {
    if let Some(&bad) = plan.sources().iter().find(|&&s| s >= image.channels()) {
        return Err(Error::shape(format!(
            "plan references channel {bad} but the image has {} channels",
            image.channels()
        )));
    }
    image.gather_channels(plan.sources())
}

pub fn csp_transform(image: &RasterImage, cfg: &CspConfig, key: DrawKey) -> Result<RasterImage> {
    if image.channels() != cfg.m {
        return Err(Error::shape(format!("image has {} channels, CSP expects m = {}", image.channels(), cfg.m)));
    }
    apply_plan(image, &draw_channel_plan(cfg, key)?)
}

pub fn reverse_channels(image: &RasterImage) -> RasterImage {
    let order: Vec<usize> = (0..image.channels()).rev().collect();
    image.gather_channels(&order).expect("reversal is a valid permutation")
}

/// Picks bands by name in the requested order.
pub fn select_bands<S: AsRef<str>>(image: &RasterImage, names: &[S]) -> Result<RasterImage> {
    let indices = names
        .iter()
        .map(|n| image.band_index(n.as_ref()).ok_or_else(|| Error::UnknownBand(n.as_ref().to_string())))
        .collect::<Result<Vec<_>>>()?;
    image.gather_channels(&indices)
}

/// Parses a comma-separated band list such as `"IR, R, G"`.
pub fn parse_band_list(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// How the pre-training input channels are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PretrainStrategy {
    /// Fixed natural channel order.
    Baseline,
    Csp(CspConfig),
}

impl PretrainStrategy {
    /// Short label: `IM-RGB` style baseline or `CSP-n`.
    pub fn tag(&self) -> String {
        match self {
            PretrainStrategy::Baseline => "Baseline".to_string(),
            PretrainStrategy::Csp(cfg) => format!("CSP-{}", cfg.n),
        }
    }

    /// Checks the strategy against the dataset and model channel counts.
    pub fn validate(&self, dataset_channels: usize, model_channels: usize) -> Result<()> {
        match self {
            PretrainStrategy::Baseline if dataset_channels != model_channels => Err(Error::config(
                "strategy",
                format!(
                    "baseline needs dataset channels ({dataset_channels}) == model input channels ({model_channels})"
                ),
            )),
            PretrainStrategy::Csp(cfg) if cfg.m != dataset_channels => Err(Error::config(
                "csp.m",
                format!("CSP m = {} but the dataset has {dataset_channels} channels", cfg.m),
            )),
            PretrainStrategy::Csp(cfg) if cfg.n != model_channels => Err(Error::config(
                "csp.n",
                format!("CSP n = {} but the model has {model_channels} input channels", cfg.n),
            )),
            _ => Ok(()),
        }
    }

    pub fn model_channels(&self, dataset_channels: usize) -> usize {
        match self {
            PretrainStrategy::Baseline => dataset_channels,
            PretrainStrategy::Csp(cfg) => cfg.n,
        }
    }
}
