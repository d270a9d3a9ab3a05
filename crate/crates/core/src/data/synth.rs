//! Synthetic datasets that separate spatial from spectral class cues.
//!
//! * `spatial-cue`: each class is an oriented texture rendered on every
//!   channel. Channel `c` sees the texture at gain `decay^c` (jittered per
//!   sample) plus i.i.d. Gaussian noise and a random offset, so every channel
//!   carries the class but with a fixed, channel-dependent signal-to-noise
//!   ratio.
//! * `spectral-cue`: flat regions whose class is encoded only by which channel
//!   is bright and which is dark (a class-specific permutation of a spectrum).
//! * `mixed`: the texture plus a weak class spectrum.
//!
//! Segmentation scenes are Voronoi partitions; each cell gets a class, or
//! with some probability the ignore label and an unstructured noise texture.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Sample, SampleEntry, Splits};
use super::raster::{LabelMask, RasterData, RasterImage, IGNORE_INDEX};
use super::{save_mask, save_raster};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, DrawRng, Stream};

pub const TEXTURE_NAMES: [&str; 8] =
    ["h-stripes", "v-stripes", "checker", "diagonal", "anti-diagonal", "dots", "h-fine", "v-fine"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthMode {
    SpatialCue,
    SpectralCue,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTask {
    Classification,
    Segmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mode: SynthMode,
    pub task: SynthTask,
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub noise: f64,
    pub train: usize,
    pub val: usize,
    #[serde(default)]
    pub test: usize,
    pub seed: u64,
    /// Ratio between the gains of consecutive channels.
    #[serde(default = "default_decay")]
    pub gain_decay: f64,
    /// Strength of the class spectrum in `mixed` mode.
    #[serde(default = "default_tint")]
    pub tint: f64,
    /// Fraction of segmentation cells labelled as ignore.
    #[serde(default = "default_clutter")]
    pub clutter: f64,
    /// Mean Voronoi cell area in pixels for segmentation scenes.
    #[serde(default = "default_cell_area")]
    pub cell_area: f64,
}

fn default_decay() -> f64 {
    0.45
}
fn default_tint() -> f64 {
    0.35
}
fn default_clutter() -> f64 {
    0.1
}
fn default_cell_area() -> f64 {
    160.0
}

/// Digital numbers are stored as `u8`: `128 + 32·x`, clamped.
const DN_OFFSET: f64 = 128.0;
const DN_SCALE: f64 = 32.0;

impl SynthSpec {
    pub fn new(mode: SynthMode, task: SynthTask, classes: usize, channels: usize, size: usize, seed: u64) -> Self {
        Self {
            mode,
            task,
            classes,
            channels,
            height: size,
            width: size,
            noise: 1.0,
            train: 100,
            val: 20,
            test: 0,
            seed,
            gain_decay: default_decay(),
            tint: default_tint(),
            clutter: default_clutter(),
            cell_area: default_cell_area(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classes", "need at least 2 classes"));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::config("size", "channels and image size must be positive"));
        }
        if self.mode != SynthMode::SpectralCue && self.classes > TEXTURE_NAMES.len() {
            return Err(Error::config("classes", format!("at most {} texture classes", TEXTURE_NAMES.len())));
        }
        if self.mode != SynthMode::SpatialCue {
            let perms: usize = (1..=self.channels).product();
            if self.channels < 2 || self.classes > perms {
                return Err(Error::config(
                    "classes",
                    format!("{} channels encode at most {perms} spectral classes", self.channels),
                ));
            }
        }
        if !(self.noise >= 0.0 && self.gain_decay > 0.0 && self.tint >= 0.0 && (0.0..1.0).contains(&self.clutter)) {
            return Err(Error::config("noise", "noise, tint and gain decay must be non-negative; clutter in [0, 1)"));
        }
        if self.cell_area <= 0.0 {
            return Err(Error::config("cell_area", "cell area must be positive"));
        }
        Ok(())
    }

    pub fn band_names(&self) -> Vec<String> {
        (0..self.channels).map(|c| format!("S{}", c + 1)).collect()
    }

    /// Base gain of channel `c` before per-sample jitter.
    pub fn sensor_gain(&self, c: usize) -> f64 {
        self.gain_decay.powi(c as i32)
    }

    /// Per-channel signature of class `k`: a permutation of an evenly spaced
    /// ramp in `[-1, 1]`, distinct for every class.
    pub fn class_spectrum(&self, k: usize) -> Vec<f64> {
        let n = self.channels;
        let total: usize = (1..=n).product();
        let perm = nth_permutation(n, k * (total / self.classes));
        perm.iter().map(|&r| if n == 1 { 0.0 } else { 2.0 * r as f64 / (n - 1) as f64 - 1.0 }).collect()
    }

    fn count(&self, split: &str) -> usize {
        match split {
            "train" => self.train,
            "val" => self.val,
            _ => self.test,
        }
    }
}

/// Lexicographic `index`-th permutation of `0..n`.
pub fn nth_permutation(n: usize, mut index: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let f: usize = (1..=i).product();
        out.push(pool.remove(index / f));
        index %= f;
    }
    out
}

/// One oriented texture instance with its own phase and period jitter.
#[derive(Debug, Clone, Copy)]
struct Texture {
    class: usize,
    period: f64,
    phase: (f64, f64),
}

impl Texture {
    fn draw(class: usize, rng: &mut DrawRng) -> Self {
        let period = 4.0 * rng.random_range(0.85..1.15);
        let phase = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        Self { class, period, phase }
    }

    /// Unit-RMS pattern value at pixel `(y, x)`.
    fn at(&self, y: usize, x: usize) -> f64 {
        let (y, x) = (y as f64, x as f64);
        let w = 2.0 * PI / self.period;
        let (a, b) = self.phase;
        let s2 = std::f64::consts::SQRT_2;
        match self.class {
            0 => s2 * (w * y + a).sin(),
            1 => s2 * (w * x + a).sin(),
            2 => 2.0 * (w * 0.7 * x + a).sin() * (w * 0.7 * y + b).sin(),
            3 => s2 * (w * (x + y) / s2 + a).sin(),
            4 => s2 * (w * (x - y) / s2 + a).sin(),
            5 => 2.0 * (w * 0.5 * x + a).sin() * (w * 0.5 * y + b).sin(),
            6 => s2 * (2.0 * w * y + a).sin(),
            _ => s2 * (2.0 * w * x + a).sin(),
        }
    }
}

/// Per-sample sensor state: channel gains and offsets.
struct Sensor {
    gain: Vec<f64>,
    offset: Vec<f64>,
}

impl Sensor {
    fn draw(spec: &SynthSpec, rng: &mut DrawRng) -> Self {
        let gain = (0..spec.channels).map(|c| spec.sensor_gain(c) * rng.random_range(0.7..1.3)).collect();
        let offset = (0..spec.channels).map(|_| rng.random_range(-0.5..0.5)).collect();
        Self { gain, offset }
    }
}

/// What fills one region of a scene.
enum Fill {
    Class(Texture),
    Clutter,
}

fn render(spec: &SynthSpec, rng: &mut DrawRng, region_of: &[usize], fills: &[Fill]) -> RasterImage {
    let (h, w, n) = (spec.height, spec.width, spec.channels);
    let plane = h * w;
    let sensor = Sensor::draw(spec, rng);
    let brightness = rng.random_range(0.8..1.2);
    let spectra: Vec<Vec<f64>> = (0..spec.classes).map(|k| spec.class_spectrum(k)).collect();
    let mut data = vec![0u8; n * plane];
    for c in 0..n {
        for i in 0..plane {
            let (y, x) = (i / w, i % w);
            let noise: f64 = StandardNormal.sample(rng);
            let signal = match &fills[region_of[i]] {
                Fill::Class(t) => match spec.mode {
                    SynthMode::SpatialCue => sensor.gain[c] * t.at(y, x),
                    SynthMode::SpectralCue => brightness * spectra[t.class][c],
                    SynthMode::Mixed => sensor.gain[c] * t.at(y, x) + spec.tint * spectra[t.class][c],
                },
                Fill::Clutter => 0.0,
            };
            let v = signal + sensor.offset[c] + spec.noise * noise;
            data[c * plane + i] = (DN_OFFSET + DN_SCALE * v).round().clamp(0.0, 255.0) as u8;
        }
    }
    RasterImage::new(spec.band_names(), h, w, RasterData::U8(data)).expect("synthetic geometry is consistent")
}

fn voronoi(spec: &SynthSpec, rng: &mut DrawRng) -> (Vec<usize>, usize) {
    let (h, w) = (spec.height, spec.width);
    let cells = ((h * w) as f64 / spec.cell_area).round().max(2.0) as usize;
    let seeds: Vec<(f64, f64)> =
        (0..cells).map(|_| (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64))).collect();
    let region = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            let d = |&(sy, sx): &(f64, f64)| (sy - y).powi(2) + (sx - x).powi(2);
            (0..cells).min_by(|&a, &b| d(&seeds[a]).total_cmp(&d(&seeds[b]))).expect("at least one cell")
        })
        .collect();
    (region, cells)
}

/// Generates sample `index` of `split` in memory.
pub fn synth_sample(spec: &SynthSpec, split: &str, index: usize) -> Sample {
    let split_id = match split {
        "train" => 0,
        "val" => 1,
        _ => 2,
    };
    let mut rng = stream_rng(spec.seed, Stream::Synth, split_id, index as u64);
    match spec.task {
        SynthTask::Classification => {
            let class = rng.random_range(0..spec.classes);
            let fill = Fill::Class(Texture::draw(class, &mut rng));
            let image = render(spec, &mut rng, &vec![0; spec.height * spec.width], &[fill]);
            Sample { image, mask: None, label: Some(class) }
        }
        SynthTask::Segmentation => {
            let (region_of, cells) = voronoi(spec, &mut rng);
            let mut labels = Vec::with_capacity(cells);
            let fills: Vec<Fill> = (0..cells)
                .map(|_| {
                    if rng.random::<f64>() < spec.clutter {
                        labels.push(IGNORE_INDEX);
                        Fill::Clutter
                    } else {
                        let k = rng.random_range(0..spec.classes);
                        labels.push(k as u8);
                        Fill::Class(Texture::draw(k, &mut rng))
                    }
                })
                .collect();
            let image = render(spec, &mut rng, &region_of, &fills);
            let mask = LabelMask::new(spec.height, spec.width, region_of.iter().map(|&r| labels[r]).collect())
                .expect("scene-sized mask");
            Sample { image, mask: Some(mask), label: None }
        }
    }
}

/// All samples of one split, in index order.
pub fn synth_split(spec: &SynthSpec, split: &str) -> Vec<Sample> {
    (0..spec.count(split)).map(|i| synth_sample(spec, split, i)).collect()
}

fn class_names(spec: &SynthSpec) -> Vec<String> {
    (0..spec.classes)
        .map(|k| match spec.mode {
            SynthMode::SpectralCue => format!("spectrum-{k}"),
            _ => TEXTURE_NAMES[k].to_string(),
        })
        .collect()
}

/// In-memory manifest for a spec (no files, empty splits).
pub fn synth_manifest_header(spec: &SynthSpec) -> DatasetManifest {
    DatasetManifest {
        name: format!("synth-{:?}-{:?}", spec.mode, spec.task).to_lowercase(),
        classes: class_names(spec),
        ignore_index: IGNORE_INDEX,
        bands: spec.band_names(),
        splits: Splits::default(),
        norm_stats: None,
        root: Default::default(),
    }
}

/// Writes every split as MBR files under `out` plus `out/manifest.json`.
pub fn synth_generate(spec: &SynthSpec, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut manifest = synth_manifest_header(spec);
    manifest.root = out.to_path_buf();
    for split in ["train", "val", "test"] {
        let dir = out.join(split);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut entries = Vec::new();
        for (i, sample) in synth_split(spec, split).into_iter().enumerate() {
            let image = format!("{split}/{i:05}.mbr");
            save_raster(&sample.image, &out.join(&image))?;
            let mask = match &sample.mask {
                Some(m) => {
                    let rel = format!("{split}/{i:05}_mask.mbr");
                    save_mask(m, &out.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            entries.push(SampleEntry { image, mask, label: sample.label });
        }
        match split {
            "train" => manifest.splits.train = entries,
            "val" => manifest.splits.val = entries,
            _ => manifest.splits.test = entries,
        }
    }
    manifest.norm_stats = Some(manifest.compute_norm_stats("train")?);
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}
