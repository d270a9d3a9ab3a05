//! `MBR1` multiband raster container.
//!
//! Little-endian layout:
//!
//! ```text
//! "MBR1" | u32 version (1) | u32 C | u32 H | u32 W | u8 dtype | u8×3 reserved
//! C × (u16 name length | UTF-8 name bytes)
//! C planes of H·W values, row-major
//! ```
//!
//! dtype codes: 0 = u8, 1 = u16, 2 = f32.

use std::path::Path;

use super::raster::{Dtype, RasterData, RasterImage};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_file};

pub const MAGIC: &[u8; 4] = b"MBR1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MbrHeader {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: Dtype,
    pub bands: Vec<String>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptHeader(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
}

fn parse_header(cur: &mut Cursor<'_>) -> Result<MbrHeader> {
    let magic = cur.take(4, "magic").map_err(|_| Error::BadMagic("file shorter than magic".into()))?;
    if magic != MAGIC {
        return Err(Error::BadMagic(format!("expected MBR1, found {magic:?}")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::CorruptHeader(format!("unsupported version {version}")));
    }
    let channels = cur.u32("channel count")? as usize;
    let height = cur.u32("height")? as usize;
    let width = cur.u32("width")? as usize;
    let dtype_code = cur.take(1, "dtype")?[0];
    cur.take(3, "reserved bytes")?;
    let dtype = Dtype::from_code(dtype_code)?;
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::CorruptHeader(format!("empty dimensions {channels}x{height}x{width}")));
    }
    let mut bands = Vec::with_capacity(channels.min(1024));
    for _ in 0..channels {
        let len = cur.u16("band name length")? as usize;
        let raw = cur.take(len, "band name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::CorruptHeader("band name is not UTF-8".into()))?;
        bands.push(name.to_string());
    }
    Ok(MbrHeader { channels, height, width, dtype, bands })
}

pub fn decode(bytes: &[u8]) -> Result<RasterImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let h = parse_header(&mut cur)?;
    let count = h
        .channels
        .checked_mul(h.height)
        .and_then(|v| v.checked_mul(h.width))
        .ok_or_else(|| Error::CorruptHeader("dimensions overflow".into()))?;
    let payload = bytes.len() - cur.pos;
    if payload != count * h.dtype.size() {
        return Err(Error::CorruptHeader(format!(
            "expected {} payload bytes, found {payload}",
            count * h.dtype.size()
        )));
    }
    let raw = &bytes[cur.pos..];
    let data = match h.dtype {
        Dtype::U8 => RasterData::U8(raw.to_vec()),
        Dtype::U16 => RasterData::U16(raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect()),
        Dtype::F32 => {
            RasterData::F32(raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        }
    };
    RasterImage::new(h.bands, h.height, h.width, data).map_err(|e| Error::CorruptHeader(e.to_string()))
}

pub fn encode(image: &RasterImage) -> Result<Vec<u8>> {
    let dim = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::config(what, "dimension exceeds u32"));
    let mut out = Vec::with_capacity(32 + image.channels() * image.plane_len() * image.dtype().size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim(image.channels(), "channels")?.to_le_bytes());
    out.extend_from_slice(&dim(image.height(), "height")?.to_le_bytes());
    out.extend_from_slice(&dim(image.width(), "width")?.to_le_bytes());
    out.push(image.dtype().code());
    out.extend_from_slice(&[0, 0, 0]);
    for band in image.bands() {
        let len =
            u16::try_from(band.len()).map_err(|_| Error::config("bands", format!("band name `{band}` too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(band.as_bytes());
    }
    for c in 0..image.channels() {
        out.extend_from_slice(&image.plane_bytes(c));
    }
    Ok(out)
}

pub fn save_mbr(image: &RasterImage, path: &Path) -> Result<()> {
    atomic_write(path, &encode(image)?)
}

pub fn load_mbr(path: &Path) -> Result<RasterImage> {
    decode(&read_file(path)?)
}

/// Parses only the header; used to validate manifests without loading pixels.
pub fn read_mbr_header(path: &Path) -> Result<MbrHeader> {
    use std::io::Read;
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut head = Vec::new();
    file.take(1 << 20).read_to_end(&mut head).map_err(|e| Error::io(path, e))?;
    parse_header(&mut Cursor { bytes: &head, pos: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dtype: Dtype) -> RasterImage {
        let bands = vec!["R".to_string(), "G".into(), "IR".into()];
        let data = match dtype {
            Dtype::U8 => RasterData::U8((0..36).map(|i| (i * 7) as u8).collect()),
            Dtype::U16 => RasterData::U16((0..36).map(|i| (i * 1999) as u16).collect()),
            Dtype::F32 => RasterData::F32((0..36).map(|i| i as f32 * -0.37 + 1e-3).collect()),
        };
        RasterImage::new(bands, 3, 4, data).unwrap()
    }

    #[test]
    fn round_trip_every_dtype() {
        for dtype in [Dtype::U8, Dtype::U16, Dtype::F32] {
            let img = sample(dtype);
            let bytes = encode(&img).unwrap();
            assert_eq!(decode(&bytes).unwrap(), img);
            assert_eq!(encode(&decode(&bytes).unwrap()).unwrap(), bytes);
        }
    }

    #[test]
    fn truncation_is_corrupt_header() {
        let bytes = encode(&sample(Dtype::U16)).unwrap();
        for cut in [5, 20, 25, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::CorruptHeader(_))), "cut {cut}");
        }
    }

    #[test]
    fn bad_magic_and_dtype() {
        let mut bytes = encode(&sample(Dtype::U8)).unwrap();
        bytes[20] = 9;
        assert!(matches!(decode(&bytes), Err(Error::UnsupportedDtype(_))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::BadMagic(_))));
        assert!(matches!(decode(b"MB"), Err(Error::BadMagic(_))));
    }
}
