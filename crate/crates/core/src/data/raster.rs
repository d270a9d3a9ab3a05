use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label value excluded from loss and metrics.
pub const IGNORE_INDEX: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U16,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::U16 => 1,
            Dtype::F32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::U8),
            1 => Ok(Dtype::U16),
            2 => Ok(Dtype::F32),
            other => Err(Error::UnsupportedDtype(format!("code {other}"))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }
}

/// Planar sample storage, `C·H·W` values, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl RasterData {
    pub fn len(&self) -> usize {
        match self {
            RasterData::U8(v) => v.len(),
            RasterData::U16(v) => v.len(),
            RasterData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            RasterData::U8(_) => Dtype::U8,
            RasterData::U16(_) => Dtype::U16,
            RasterData::F32(_) => Dtype::F32,
        }
    }

    fn gather(&self, plane: usize, planes: &[usize]) -> RasterData {
        fn pick<V: Copy>(src: &[V], plane: usize, planes: &[usize]) -> Vec<V> {
            let mut out = Vec::with_capacity(plane * planes.len());
            for &p in planes {
                out.extend_from_slice(&src[p * plane..(p + 1) * plane]);
            }
            out
        }
        match self {
            RasterData::U8(v) => RasterData::U8(pick(v, plane, planes)),
            RasterData::U16(v) => RasterData::U16(pick(v, plane, planes)),
            RasterData::F32(v) => RasterData::F32(pick(v, plane, planes)),
        }
    }
}

/// Multiband image with named bands and planar storage.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    bands: Vec<String>,
    height: usize,
    width: usize,
    data: RasterData,
}

impl RasterImage {
    pub fn new(bands: Vec<String>, height: usize, width: usize, data: RasterData) -> Result<Self> {
        if bands.is_empty() || height == 0 || width == 0 {
            return Err(Error::shape(format!("empty raster: {} bands, {height}x{width}", bands.len())));
        }
        if data.len() != bands.len() * height * width {
            return Err(Error::shape(format!(
                "{} bands of {height}x{width} need {} values, got {}",
                bands.len(),
                bands.len() * height * width,
                data.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = bands.iter().find(|b| !seen.insert(b.as_str())) {
            return Err(Error::shape(format!("duplicate band name `{dup}`")));
        }
        Ok(Self { bands, height, width, data })
    }

    pub fn from_f32(bands: Vec<String>, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(bands, height, width, RasterData::F32(data))
    }

    pub fn bands(&self) -> &[String] {
        &self.bands
    }

    pub fn channels(&self) -> usize {
        self.bands.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &RasterData {
        &self.data
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.bands.iter().position(|b| b == name)
    }

    /// Converted copy of one plane; values are not rescaled.
    pub fn plane_f32(&self, c: usize) -> Vec<f32> {
        let r = c * self.plane_len()..(c + 1) * self.plane_len();
        match &self.data {
            RasterData::U8(v) => v[r].iter().map(|&x| f32::from(x)).collect(),
            RasterData::U16(v) => v[r].iter().map(|&x| f32::from(x)).collect(),
            RasterData::F32(v) => v[r].to_vec(),
        }
    }

    /// Raw little-endian bytes of one plane.
    pub fn plane_bytes(&self, c: usize) -> Vec<u8> {
        let r = c * self.plane_len()..(c + 1) * self.plane_len();
        match &self.data {
            RasterData::U8(v) => v[r].to_vec(),
            RasterData::U16(v) => v[r].iter().flat_map(|x| x.to_le_bytes()).collect(),
            RasterData::F32(v) => v[r].iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            RasterData::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Same image with `f32` storage.
    pub fn to_f32(&self) -> RasterImage {
        let data = match &self.data {
            RasterData::F32(v) => v.clone(),
            RasterData::U8(v) => v.iter().map(|&x| f32::from(x)).collect(),
            RasterData::U16(v) => v.iter().map(|&x| f32::from(x)).collect(),
        };
        RasterImage { bands: self.bands.clone(), height: self.height, width: self.width, data: RasterData::F32(data) }
    }

    /// Copies the listed channels, in order, into a new image. Planes are
    /// copied bitwise. Repeated sources are disambiguated as `name#2`, `name#3`.
    pub fn gather_channels(&self, sources: &[usize]) -> Result<RasterImage> {
        if sources.is_empty() {
            return Err(Error::shape("no channels selected"));
        }
        if let Some(&bad) = sources.iter().find(|&&s| s >= self.channels()) {
            return Err(Error::shape(format!("channel {bad} out of range for {} channels", self.channels())));
        }
        let mut uses = vec![0usize; self.channels()];
        let bands = sources
            .iter()
            .map(|&s| {
                uses[s] += 1;
                if uses[s] == 1 {
                    self.bands[s].clone()
                } else {
                    format!("{}#{}", self.bands[s], uses[s])
                }
            })
            .collect();
        RasterImage::new(bands, self.height, self.width, self.data.gather(self.plane_len(), sources))
    }

    pub fn with_bands(mut self, bands: Vec<String>) -> Result<RasterImage> {
        if bands.len() != self.channels() {
            return Err(Error::shape(format!("{} band names for {} channels", bands.len(), self.channels())));
        }
        self.bands = bands;
        RasterImage::new(self.bands, self.height, self.width, self.data)
    }
}

/// Per-pixel class ids; [`IGNORE_INDEX`] marks excluded pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::shape(format!("mask {height}x{width} with {} values", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Checks every value is a class id below `classes` or the ignore value.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self.data.iter().find(|&&v| v != IGNORE_INDEX && usize::from(v) >= classes) {
            Some(&v) => Err(Error::ClassOutOfRange { value: usize::from(v), classes }),
            None => Ok(()),
        }
    }

    /// Targets for the masked cross-entropy, ignore value preserved.
    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().map(|&v| usize::from(v))
    }
}
