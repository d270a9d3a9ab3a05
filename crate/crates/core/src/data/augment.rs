//! Training-time augmentation: random rescale, crop and horizontal flip.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raster::{LabelMask, RasterImage, IGNORE_INDEX};
use crate::csp::DrawKey;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_SCALES: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 1.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub crop: usize,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_flip")]
    pub flip_prob: f64,
}

fn default_scales() -> Vec<f64> {
    DEFAULT_SCALES.to_vec()
}

fn default_flip() -> f64 {
    0.5
}

impl AugmentConfig {
    pub fn new(crop: usize) -> Self {
        Self { crop, scales: default_scales(), flip_prob: default_flip() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 {
            return Err(Error::config("augment.crop", "crop size must be at least 1"));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::config("augment.scales", "scales must be a non-empty list of positive numbers"));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config("augment.flip_prob", "flip probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One concrete draw of the augmentation randomness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub scale: f64,
    /// Crop offset in the rescaled image.
    pub top: usize,
    pub left: usize,
    pub flip: bool,
}

pub fn scaled_size(len: usize, scale: f64) -> usize {
    ((len as f64 * scale).round() as usize).max(1)
}

/// Draws scale, crop offset and flip for a `height×width` sample.
pub fn draw_augment_params(cfg: &AugmentConfig, height: usize, width: usize, seed: u64, key: DrawKey) -> AugmentParams {
    let mut rng = stream_rng(seed, Stream::Augment, key.epoch, key.sample_index);
    let scale = cfg.scales[rng.random_range(0..cfg.scales.len())];
    let (sh, sw) = (scaled_size(height, scale), scaled_size(width, scale));
    let top = rng.random_range(0..=sh.saturating_sub(cfg.crop));
    let left = rng.random_range(0..=sw.saturating_sub(cfg.crop));
    let flip = rng.random::<f64>() < cfg.flip_prob;
    AugmentParams { scale, top, left, flip }
}

/// Bilinear resize of one plane with half-pixel centers and edge clamping.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let axis = |out: usize, len: usize| -> Vec<(usize, usize, f32)> {
        (0..out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let (ys, xs) = (axis(oh, h), axis(ow, w));
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (&src[y0 * w..(y0 + 1) * w], &src[y1 * w..(y1 + 1) * w]);
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// Nearest-neighbour source index for output index `d` (half-pixel centers).
pub fn nearest_index(d: usize, len: usize, out: usize) -> usize {
    ((2 * d + 1) * len / (2 * out)).min(len - 1)
}

pub fn resize_nearest<V: Copy>(src: &[V], h: usize, w: usize, oh: usize, ow: usize) -> Vec<V> {
    let xs: Vec<usize> = (0..ow).map(|d| nearest_index(d, w, ow)).collect();
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let row = &src[nearest_index(y, h, oh) * w..][..w];
        out.extend(xs.iter().map(|&x| row[x]));
    }
    out
}

/// Copies a `crop×crop` window starting at `(top, left)`; cells past the
/// source edge take `fill`. Optionally mirrors the window horizontally.
fn crop_plane<V: Copy>(src: &[V], h: usize, w: usize, p: &AugmentParams, crop: usize, fill: V) -> Vec<V> {
    let mut out = vec![fill; crop * crop];
    let rows = crop.min(h.saturating_sub(p.top));
    let cols = crop.min(w.saturating_sub(p.left));
    for y in 0..rows {
        let srow = &src[(p.top + y) * w + p.left..][..cols];
        out[y * crop..y * crop + cols].copy_from_slice(srow);
    }
    if p.flip {
        for row in out.chunks_mut(crop) {
            row.reverse();
        }
    }
    out
}

/// Applies a fixed draw. Output images are `f32`; padding uses the per-channel
/// mean of the rescaled image and the ignore value for masks.
pub fn apply_augment(
    image: &RasterImage,
    mask: Option<&LabelMask>,
    crop: usize,
    params: &AugmentParams,
) -> Result<(RasterImage, Option<LabelMask>)> {
    let (h, w) = (image.height(), image.width());
    if let Some(m) = mask {
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::shape(format!("mask {}x{} does not match image {h}x{w}", m.height(), m.width())));
        }
    }
    let (sh, sw) = (scaled_size(h, params.scale), scaled_size(w, params.scale));
    let mut data = Vec::with_capacity(image.channels() * crop * crop);
    for c in 0..image.channels() {
        let plane = image.plane_f32(c);
        let scaled = if (sh, sw) == (h, w) { plane } else { resize_bilinear(&plane, h, w, sh, sw) };
        let fill = if sh < params.top + crop || sw < params.left + crop {
            (scaled.iter().map(|&v| f64::from(v)).sum::<f64>() / scaled.len() as f64) as f32
        } else {
            0.0
        };
        data.extend(crop_plane(&scaled, sh, sw, params, crop, fill));
    }
    let out = RasterImage::from_f32(image.bands().to_vec(), crop, crop, data)?;
    let mask = match mask {
        Some(m) => {
            let scaled = if (sh, sw) == (h, w) { m.data().to_vec() } else { resize_nearest(m.data(), h, w, sh, sw) };
            Some(LabelMask::new(crop, crop, crop_plane(&scaled, sh, sw, params, crop, IGNORE_INDEX))?)
        }
        None => None,
    };
    Ok((out, mask))
}

/// Draws parameters for `key` and applies them. Deterministic in `(seed, key)`.
pub fn augment_sample(
    image: &RasterImage,
    mask: Option<&LabelMask>,
    cfg: &AugmentConfig,
    seed: u64,
    key: DrawKey,
) -> Result<(RasterImage, Option<LabelMask>)> {
    cfg.validate()?;
    let params = draw_augment_params(cfg, image.height(), image.width(), seed, key);
    apply_augment(image, mask, cfg.crop, &params)
}
