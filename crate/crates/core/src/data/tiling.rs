//! Sliding-window tiling of large scenes and stitching of per-tile outputs.
//!
//! Windows start at multiples of the stride; the last window along each axis
//! is clamped flush to the far edge so every tile is exactly `P×P`. Scenes
//! smaller than the patch are reflect-padded up to `P`.

use serde::{Deserialize, Serialize};

use super::raster::{LabelMask, RasterData, RasterImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    /// Mirror without repeating the edge pixel (`dcb|abcd|cba`).
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub stride: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    /// Top offsets of the window rows.
    pub rows: Vec<usize>,
    /// Left offsets of the window columns.
    pub cols: Vec<usize>,
    pub padding: PaddingMode,
}

fn window_starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut at = 0;
    loop {
        if at + patch >= len {
            starts.push(len - patch);
            return starts;
        }
        starts.push(at);
        at += stride;
    }
}

impl TileGrid {
    pub fn new(height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 {
            return Err(Error::config("patch", "patch size must be at least 1"));
        }
        if stride == 0 || stride > patch {
            return Err(Error::config("stride", format!("stride {stride} must be in 1..={patch}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::config("size", "cannot tile an empty image"));
        }
        let (padded_height, padded_width) = (height.max(patch), width.max(patch));
        Ok(Self {
            height,
            width,
            patch,
            stride,
            padded_height,
            padded_width,
            rows: window_starts(padded_height, patch, stride),
            cols: window_starts(padded_width, patch, stride),
            padding: PaddingMode::Reflect,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major `(top, left)` offsets of every tile.
    pub fn windows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().flat_map(move |&r| self.cols.iter().map(move |&c| (r, c)))
    }
}

/// Reflect-101 index folding; valid for any `i` and `len ≥ 1`.
pub fn reflect_index(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

fn gather<V: Copy>(src: &[V], plane: usize, channels: usize, src_w: usize, rows: &[usize], cols: &[usize]) -> Vec<V> {
    let mut out = Vec::with_capacity(channels * rows.len() * cols.len());
    for c in 0..channels {
        let base = c * plane;
        for &r in rows {
            for &col in cols {
                out.push(src[base + r * src_w + col]);
            }
        }
    }
    out
}

/// Copies the window at `(top, left)` of the reflect-padded image.
pub fn crop_window(image: &RasterImage, top: usize, left: usize, patch: usize) -> RasterImage {
    let rows: Vec<usize> = (top..top + patch).map(|y| reflect_index(y, image.height())).collect();
    let cols: Vec<usize> = (left..left + patch).map(|x| reflect_index(x, image.width())).collect();
    let (plane, c, w) = (image.plane_len(), image.channels(), image.width());
    let data = match image.data() {
        RasterData::U8(v) => RasterData::U8(gather(v, plane, c, w, &rows, &cols)),
        RasterData::U16(v) => RasterData::U16(gather(v, plane, c, w, &rows, &cols)),
        RasterData::F32(v) => RasterData::F32(gather(v, plane, c, w, &rows, &cols)),
    };
    RasterImage::new(image.bands().to_vec(), patch, patch, data).expect("window geometry is consistent")
}

pub fn tile(image: &RasterImage, patch: usize, stride: usize) -> Result<(Vec<RasterImage>, TileGrid)> {
    let grid = TileGrid::new(image.height(), image.width(), patch, stride)?;
    let tiles = grid.windows().map(|(top, left)| crop_window(image, top, left, patch)).collect();
    Ok((tiles, grid))
}

/// Dense per-pixel class scores, `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!("score map {channels}x{height}x{width} with {} values", data.len())));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn from_image(image: &RasterImage) -> Self {
        let data = (0..image.channels()).flat_map(|c| image.plane_f32(c)).collect();
        Self { channels: image.channels(), height: image.height(), width: image.width(), data }
    }

    /// Per-pixel argmax; ties resolve to the lowest class index.
    pub fn argmax(&self) -> LabelMask {
        let plane = self.height * self.width;
        let labels = (0..plane)
            .map(|i| {
                let mut best = 0;
                for c in 1..self.channels {
                    if self.data[c * plane + i] > self.data[best * plane + i] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelMask::new(self.height, self.width, labels).expect("plane-sized label map")
    }
}

/// Averages overlapping tile scores per pixel and crops away the padding.
/// Sums are accumulated in `f64` in tile index order.
pub fn stitch(tiles: &[ScoreMap], grid: &TileGrid) -> Result<ScoreMap> {
    if tiles.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} tiles for a grid of {}", tiles.len(), grid.len())));
    }
    let channels = tiles.first().map(|t| t.channels).unwrap_or(0);
    if let Some(bad) = tiles.iter().find(|t| t.channels != channels || t.height != grid.patch || t.width != grid.patch)
    {
        return Err(Error::GridMismatch(format!(
            "tile {}x{}x{} does not match {channels}x{p}x{p}",
            bad.channels,
            bad.height,
            bad.width,
            p = grid.patch
        )));
    }
    let (h, w, p) = (grid.height, grid.width, grid.patch);
    let mut sums = vec![0f64; channels * h * w];
    let mut counts = vec![0u32; h * w];
    for (tile, (top, left)) in tiles.iter().zip(grid.windows()) {
        for ty in 0..p.min(h.saturating_sub(top)) {
            for tx in 0..p.min(w.saturating_sub(left)) {
                let (y, x) = (top + ty, left + tx);
                counts[y * w + x] += 1;
                for c in 0..channels {
                    sums[(c * h + y) * w + x] += f64::from(tile.data[(c * p + ty) * p + tx]);
                }
            }
        }
    }
    let data = sums.iter().enumerate().map(|(i, &s)| (s / f64::from(counts[i % (h * w)])) as f32).collect();
    ScoreMap::new(channels, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize) -> RasterImage {
        let bands = (0..c).map(|i| format!("b{i}")).collect();
        RasterImage::new(bands, h, w, RasterData::U16((0..c * h * w).map(|i| (i * 37 % 65521) as u16).collect()))
            .unwrap()
    }

    #[test]
    fn single_tile_is_identity() {
        let img = ramp(16, 16, 2);
        let (tiles, grid) = tile(&img, 16, 16).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(tiles[0], img);
    }

    #[test]
    fn large_scene_tile_count() {
        let grid = TileGrid::new(6000, 6000, 512, 512).unwrap();
        assert_eq!(grid.rows.len(), 12);
        assert_eq!(grid.len(), 144);
    }

    #[test]
    fn overlapping_window_positions() {
        let grid = TileGrid::new(1000, 900, 512, 256).unwrap();
        assert_eq!(grid.rows, vec![0, 256, 488]);
        assert_eq!(grid.cols, vec![0, 256, 388]);
        assert_eq!(grid.len(), 9);
    }

    #[test]
    fn invalid_configs() {
        assert!(TileGrid::new(10, 10, 0, 1).is_err());
        assert!(TileGrid::new(10, 10, 4, 0).is_err());
        assert!(TileGrid::new(10, 10, 4, 5).is_err());
    }

    #[test]
    fn small_scene_reflect_padded() {
        let img = ramp(3, 5, 1);
        let (tiles, grid) = tile(&img, 8, 8).unwrap();
        assert_eq!((grid.padded_height, grid.padded_width, grid.len()), (8, 8, 1));
        let t = tiles[0].plane_f32(0);
        let src = img.plane_f32(0);
        // Row 3 mirrors row 1; column 5 mirrors column 3.
        assert_eq!(t[3 * 8], src[5]);
        assert_eq!(t[5], src[3]);
    }

    #[test]
    fn non_overlapping_stitch_is_concatenation() {
        let img = ramp(8, 12, 2);
        let (tiles, grid) = tile(&img, 4, 4).unwrap();
        let maps: Vec<ScoreMap> = tiles.iter().map(ScoreMap::from_image).collect();
        assert_eq!(stitch(&maps, &grid).unwrap(), ScoreMap::from_image(&img));
    }

    #[test]
    fn overlap_scores_are_averaged() {
        let grid = TileGrid::new(1, 3, 2, 1).unwrap();
        assert_eq!(grid.cols, vec![0, 1]);
        let a = ScoreMap::new(1, 2, 2, vec![0.0, 0.2, 0.0, 0.2]).unwrap();
        let b = ScoreMap::new(1, 2, 2, vec![0.4, 0.0, 0.4, 0.0]).unwrap();
        let out = stitch(&[a, b], &grid).unwrap();
        assert!((out.data[1] - 0.3).abs() < 1e-7);
    }

    #[test]
    fn mismatched_tiles_rejected() {
        let grid = TileGrid::new(8, 8, 4, 4).unwrap();
        let t = ScoreMap::new(1, 4, 4, vec![0.0; 16]).unwrap();
        assert!(matches!(stitch(std::slice::from_ref(&t), &grid), Err(Error::GridMismatch(_))));
        let wrong = ScoreMap::new(1, 2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(stitch(&[t.clone(), t.clone(), t, wrong], &grid), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn argmax_ties_pick_lowest_class() {
        let s = ScoreMap::new(3, 1, 2, vec![1.0, 0.0, 1.0, 2.0, 0.5, 2.0]).unwrap();
        assert_eq!(s.argmax().data(), &[0, 1]);
    }
}
