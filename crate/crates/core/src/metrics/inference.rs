//! Whole-scene inference by tiling, per-tile forward passes and stitching.

use crate::autodiff::Tensor;
use crate::batch::stack_images;
use crate::data::{normalize, stitch, tile, LabelMask, NormStats, RasterImage, ScoreMap, TileGrid};
use crate::error::{Error, Result};
use crate::model::{Head, Network};
use crate::scalar::Scalar;

/// Tiles forwarded together; each tile's scores do not depend on its batch mates.
const TILE_BATCH: usize = 16;

/// Per-tile class scores in grid order.
pub fn tile_scores<T: Scalar>(net: &Network<T>, tiles: &[RasterImage]) -> Result<Vec<ScoreMap>> {
    if net.spec().head != Head::Segmentation {
        return Err(Error::config("head", "sliding inference needs a segmentation network"));
    }
    let mut out = Vec::with_capacity(tiles.len());
    for chunk in tiles.chunks(TILE_BATCH) {
        let refs: Vec<&RasterImage> = chunk.iter().collect();
        let logits: Tensor<T> = net.predict(stack_images(&refs)?)?;
        let (n, k, h, w) = logits.dims4()?;
        for i in 0..n {
            let data = logits.data()[i * k * h * w..(i + 1) * k * h * w].iter().map(|v| v.as_f32()).collect();
            out.push(ScoreMap::new(k, h, w, data)?);
        }
    }
    Ok(out)
}

/// Stitched, overlap-averaged class scores for a whole scene.
pub fn sliding_scores<T: Scalar>(
    net: &Network<T>,
    scene: &RasterImage,
    patch: usize,
    stride: usize,
    stats: &NormStats,
) -> Result<(ScoreMap, TileGrid)> {
    if scene.channels() != net.spec().input_channels {
        return Err(Error::shape(format!(
            "network expects {} channels, scene has {}",
            net.spec().input_channels,
            scene.channels()
        )));
    }
    let normalized = normalize(scene, stats)?;
    let (tiles, grid) = tile(&normalized, patch, stride)?;
    let scores = tile_scores(net, &tiles)?;
    Ok((stitch(&scores, &grid)?, grid))
}

/// normalize → tile → forward → stitch → argmax.
pub fn sliding_inference<T: Scalar>(
    net: &Network<T>,
    scene: &RasterImage,
    patch: usize,
    stride: usize,
    stats: &NormStats,
) -> Result<LabelMask> {
    Ok(sliding_scores(net, scene, patch, stride, stats)?.0.argmax())
}
