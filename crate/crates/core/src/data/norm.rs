//! Per-channel z-score normalization.

use serde::{Deserialize, Serialize};

use super::raster::RasterImage;
use crate::error::{Error, Result};

pub const MIN_STD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Restricts the stats to the listed channels, in order.
    pub fn gather(&self, sources: &[usize]) -> NormStats {
        NormStats {
            mean: sources.iter().map(|&s| self.mean[s]).collect(),
            std: sources.iter().map(|&s| self.std[s]).collect(),
        }
    }
}

/// Sums that do not depend on the order samples are visited: per-sample
/// partials are sorted before the final reduction.
fn ordered_total(mut partials: Vec<f64>) -> f64 {
    partials.sort_by(f64::total_cmp);
    partials.iter().sum()
}

/// Population mean and std per channel over every pixel of every image.
/// Two passes: means first, then squared deviations.
pub fn compute_norm_stats<'a>(
    images: impl IntoIterator<Item = &'a RasterImage> + Clone,
    split: &str,
) -> Result<NormStats> {
    let first = images.clone().into_iter().next().ok_or_else(|| Error::EmptyDataset(split.to_string()))?;
    let channels = first.channels();
    let mut sums = vec![Vec::new(); channels];
    let mut count = 0u64;
    for img in images.clone() {
        if img.channels() != channels {
            return Err(Error::shape(format!("{} channels in a {channels}-channel split", img.channels())));
        }
        for (c, partials) in sums.iter_mut().enumerate() {
            partials.push(img.plane_f32(c).iter().map(|&v| f64::from(v)).sum::<f64>());
        }
        count += img.plane_len() as u64;
    }
    let mean: Vec<f64> = sums.into_iter().map(|p| ordered_total(p) / count as f64).collect();
    let mut sq = vec![Vec::new(); channels];
    for img in images {
        for (c, partials) in sq.iter_mut().enumerate() {
            partials.push(img.plane_f32(c).iter().map(|&v| (f64::from(v) - mean[c]).powi(2)).sum::<f64>());
        }
    }
    let std = sq.into_iter().map(|p| (ordered_total(p) / count as f64).sqrt().max(MIN_STD)).collect();
    Ok(NormStats { mean, std })
}

/// `(x − mean) / std` per channel, returned as `f32`.
pub fn normalize(image: &RasterImage, stats: &NormStats) -> Result<RasterImage> {
    if image.channels() != stats.channels() {
        return Err(Error::shape(format!(
            "{} stats channels for a {}-channel image",
            stats.channels(),
            image.channels()
        )));
    }
    let data = (0..image.channels())
        .flat_map(|c| {
            let (m, s) = (stats.mean[c], stats.std[c]);
            image.plane_f32(c).into_iter().map(move |v| ((f64::from(v) - m) / s) as f32)
        })
        .collect();
    RasterImage::from_f32(image.bands().to_vec(), image.height(), image.width(), data)
}

pub fn denormalize(image: &RasterImage, stats: &NormStats) -> Result<RasterImage> {
    if image.channels() != stats.channels() {
        return Err(Error::shape(format!(
            "{} stats channels for a {}-channel image",
            stats.channels(),
            image.channels()
        )));
    }
    let data = (0..image.channels())
        .flat_map(|c| {
            let (m, s) = (stats.mean[c], stats.std[c]);
            image.plane_f32(c).into_iter().map(move |v| (f64::from(v) * s + m) as f32)
        })
        .collect();
    RasterImage::from_f32(image.bands().to_vec(), image.height(), image.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::raster::RasterData;

    fn gray(values: Vec<u8>) -> RasterImage {
        let w = values.len();
        RasterImage::new(vec!["L".into()], 1, w, RasterData::U8(values)).unwrap()
    }

    #[test]
    fn constant_channel_std_clamped() {
        let s = compute_norm_stats(&[gray(vec![7; 5])], "train").unwrap();
        assert_eq!(s.mean, vec![7.0]);
        assert_eq!(s.std, vec![MIN_STD]);
    }

    #[test]
    fn two_values() {
        let s = compute_norm_stats(&[gray(vec![0, 2]), gray(vec![2, 0])], "train").unwrap();
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
    }

    #[test]
    fn empty_split() {
        let none: [RasterImage; 0] = [];
        assert!(matches!(compute_norm_stats(&none, "train"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn order_independent() {
        let imgs: Vec<RasterImage> = (0..9u8).map(|i| gray(vec![i * 3, 250 - i * 7, i ^ 0x55, 1])).collect();
        let a = compute_norm_stats(&imgs, "train").unwrap();
        let mut rev = imgs.clone();
        rev.reverse();
        rev.swap(2, 5);
        assert_eq!(a, compute_norm_stats(&rev, "train").unwrap());
    }

    #[test]
    fn means_normalize_to_zero_and_invert() {
        let img = gray(vec![10, 20, 30]);
        let stats = NormStats { mean: vec![20.0], std: vec![4.0] };
        let n = normalize(&img, &stats).unwrap();
        assert_eq!(n.as_f32().unwrap(), &[-2.5, 0.0, 2.5]);
        let back = denormalize(&n, &stats).unwrap();
        assert_eq!(back.as_f32().unwrap(), &[10.0, 20.0, 30.0]);
        assert_eq!(normalize(&img, &NormStats::identity(1)).unwrap(), img.to_f32());
        assert!(normalize(&img, &NormStats::identity(2)).is_err());
    }
}
