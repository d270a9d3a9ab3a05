use crate::data::synth::{synth_manifest_header, synth_split};
use crate::data::{compute_norm_stats, DatasetManifest, NormStats, Sample, SynthSpec};
use crate::error::{Error, Result};

/// Loaded training and validation splits with their normalization statistics.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub class_names: Vec<String>,
    pub bands: Vec<String>,
    pub ignore_index: u8,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub stats: NormStats,
}

impl Dataset {
    pub fn from_manifest(m: &DatasetManifest) -> Result<Self> {
        let train = m.load_split("train")?;
        if train.is_empty() {
            return Err(Error::EmptyDataset("train".into()));
        }
        let stats = match &m.norm_stats {
            Some(s) => s.clone(),
            None => compute_norm_stats(train.iter().map(|s| &s.image), "train")?,
        };
        Ok(Self {
            name: m.name.clone(),
            class_names: m.classes.clone(),
            bands: m.bands.clone(),
            ignore_index: m.ignore_index,
            val: m.load_split("val")?,
            train,
            stats,
        })
    }

    /// Generates the splits in memory.
    pub fn from_synth(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let header = synth_manifest_header(spec);
        let train = synth_split(spec, "train");
        if train.is_empty() {
            return Err(Error::EmptyDataset("train".into()));
        }
        let stats = compute_norm_stats(train.iter().map(|s| &s.image), "train")?;
        Ok(Self {
            name: header.name,
            class_names: header.classes,
            bands: header.bands,
            ignore_index: header.ignore_index,
            val: synth_split(spec, "val"),
            train,
            stats,
        })
    }

    pub fn channels(&self) -> usize {
        self.bands.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}
