//! Raster I/O, dataset manifests, tiling, augmentation, normalization and
//! synthetic datasets.

pub mod augment;
pub mod manifest;
pub mod mbr;
pub mod norm;
pub mod png_io;
pub mod raster;
pub mod synth;
pub mod tiling;

use std::path::Path;

pub use augment::{
    apply_augment, augment_sample, draw_augment_params, resize_bilinear, resize_nearest, AugmentConfig, AugmentParams,
};
pub use manifest::{DatasetManifest, Sample, SampleEntry, Splits};
pub use norm::{compute_norm_stats, denormalize, normalize, NormStats};
pub use raster::{Dtype, LabelMask, RasterData, RasterImage, IGNORE_INDEX};
pub use synth::{synth_generate, SynthMode, SynthSpec, SynthTask};
pub use tiling::{stitch, tile, ScoreMap, TileGrid};

use crate::error::{Error, Result};
use crate::fsutil::read_file;

const PNG_SIGNATURE: &[u8] = b"\x89PNG";

fn is_png(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 4];
    let mut f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
    Ok(&head[..n] == PNG_SIGNATURE)
}

/// Loads an MBR container or, when the file carries a PNG signature, a PNG.
pub fn load_raster(path: &Path) -> Result<RasterImage> {
    if is_png(path)? {
        png_io::load_png(path)
    } else {
        mbr::decode(&read_file(path)?)
    }
}

/// Always writes the MBR container.
pub fn save_raster(image: &RasterImage, path: &Path) -> Result<()> {
    mbr::save_mbr(image, path)
}

/// Masks are single-band `u8` MBR files or 8-bit single-channel PNGs.
pub fn load_mask(path: &Path) -> Result<LabelMask> {
    if is_png(path)? {
        return png_io::load_png_mask(path);
    }
    let img = mbr::decode(&read_file(path)?)?;
    match (img.channels(), img.data()) {
        (1, RasterData::U8(v)) => LabelMask::new(img.height(), img.width(), v.clone()),
        _ => Err(Error::UnsupportedDtype(format!("{}: masks must be single-band u8", path.display()))),
    }
}

pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    let img =
        RasterImage::new(vec!["label".into()], mask.height(), mask.width(), RasterData::U8(mask.data().to_vec()))?;
    mbr::save_mbr(&img, path)
}
