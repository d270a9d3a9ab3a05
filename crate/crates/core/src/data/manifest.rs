//! Dataset manifests: JSON descriptions of splits whose paths are resolved
//! relative to the manifest file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::norm::{compute_norm_stats, NormStats};
use super::raster::{LabelMask, RasterImage, IGNORE_INDEX};
use super::{load_mask, load_raster, mbr};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_json};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default)]
    pub train: Vec<SampleEntry>,
    #[serde(default)]
    pub val: Vec<SampleEntry>,
    #[serde(default)]
    pub test: Vec<SampleEntry>,
}

fn default_ignore() -> u8 {
    IGNORE_INDEX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub classes: Vec<String>,
    #[serde(default = "default_ignore")]
    pub ignore_index: u8,
    pub bands: Vec<String>,
    pub splits: Splits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<NormStats>,
    #[serde(skip)]
    pub root: PathBuf,
}

/// One loaded sample: image plus a mask (segmentation) or a label (classification).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RasterImage,
    pub mask: Option<LabelMask>,
    pub label: Option<usize>,
}

impl DatasetManifest {
    /// Reads and validates a manifest: every referenced file must exist and
    /// every image must carry exactly the manifest's band list.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = read_json(path)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn split(&self, name: &str) -> Result<&[SampleEntry]> {
        match name {
            "train" => Ok(&self.splits.train),
            "val" => Ok(&self.splits.val),
            "test" => Ok(&self.splits.test),
            other => Err(Error::config("split", format!("unknown split `{other}`"))),
        }
    }

    fn image_bands(&self, path: &Path) -> Result<Vec<String>> {
        match mbr::read_mbr_header(path) {
            Ok(h) => Ok(h.bands),
            Err(Error::BadMagic(_)) => Ok(load_raster(path)?.bands().to_vec()),
            Err(e) => Err(e),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::config("classes", "manifest lists no classes"));
        }
        if self.classes.len() > usize::from(self.ignore_index) {
            return Err(Error::config("classes", "class ids collide with the ignore index"));
        }
        for split in ["train", "val", "test"] {
            for entry in self.split(split)? {
                let path = self.resolve(&entry.image);
                if !path.is_file() {
                    return Err(Error::MissingFile(path));
                }
                let bands = self.image_bands(&path)?;
                if bands != self.bands {
                    return Err(Error::shape(format!(
                        "{}: bands {bands:?} differ from manifest bands {:?}",
                        path.display(),
                        self.bands
                    )));
                }
                if let Some(mask) = &entry.mask {
                    let mp = self.resolve(mask);
                    if !mp.is_file() {
                        return Err(Error::MissingFile(mp));
                    }
                }
                if let Some(label) = entry.label {
                    if label >= self.num_classes() {
                        return Err(Error::ClassOutOfRange { value: label, classes: self.num_classes() });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load_sample(&self, entry: &SampleEntry) -> Result<Sample> {
        let image = load_raster(&self.resolve(&entry.image))?;
        let mask = match &entry.mask {
            Some(m) => {
                let mask = load_mask(&self.resolve(m))?;
                if (mask.height(), mask.width()) != (image.height(), image.width()) {
                    return Err(Error::shape(format!("mask {m} does not match its image size")));
                }
                mask.validate(self.num_classes())?;
                Some(mask)
            }
            None => None,
        };
        Ok(Sample { image, mask, label: entry.label })
    }

    pub fn load_split(&self, name: &str) -> Result<Vec<Sample>> {
        self.split(name)?.iter().map(|e| self.load_sample(e)).collect()
    }

    /// Stored statistics if present, otherwise computed from the training split.
    pub fn norm_stats(&self) -> Result<NormStats> {
        match &self.norm_stats {
            Some(s) => Ok(s.clone()),
            None => self.compute_norm_stats("train"),
        }
    }

    pub fn compute_norm_stats(&self, split: &str) -> Result<NormStats> {
        let images =
            self.split(split)?.iter().map(|e| load_raster(&self.resolve(&e.image))).collect::<Result<Vec<_>>>()?;
        compute_norm_stats(&images, split)
    }
}
