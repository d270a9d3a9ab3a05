//! PNG import for 1 to 4 channel images and indexed-color label map export.
//!
//! Label maps use the PASCAL VOC colormap: index `i` gets the color built by
//! spreading the bits of `i` over the high bits of R, G and B (bit 0 → R,
//! bit 1 → G, bit 2 → B, repeated for the next three bits one position lower).
//! Index 255 (ignore) therefore renders as (224, 224, 192).

use std::io::Cursor;
use std::path::Path;

use super::raster::{LabelMask, RasterData, RasterImage};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_file};

/// Band names assigned to imported PNGs, by channel count.
pub fn default_band_names(channels: usize) -> Vec<String> {
    let names: &[&str] = match channels {
        1 => &["L"],
        2 => &["L", "A"],
        3 => &["R", "G", "B"],
        _ => &["R", "G", "B", "A"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn decode_png(bytes: Vec<u8>, what: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let bad = |e: png::DecodingError| match e {
        png::DecodingError::Format(_) => Error::BadMagic(format!("{}: {e}", what.display())),
        other => Error::CorruptHeader(format!("{}: {other}", what.display())),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptHeader(format!("{}: image too large", what.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// Reads an 8- or 16-bit PNG into planar storage without rescaling.
pub fn load_png(path: &Path) -> Result<RasterImage> {
    let (info, buf) = decode_png(read_file(path)?, path)?;
    let channels = info.color_type.samples();
    let (h, w) = (info.height as usize, info.width as usize);
    let plane = h * w;
    let data = match info.bit_depth {
        png::BitDepth::Eight => {
            let mut out = vec![0u8; channels * plane];
            for (i, px) in buf.chunks_exact(channels).enumerate() {
                for (c, &v) in px.iter().enumerate() {
                    out[c * plane + i] = v;
                }
            }
            RasterData::U8(out)
        }
        png::BitDepth::Sixteen => {
            let mut out = vec![0u16; channels * plane];
            for (i, px) in buf.chunks_exact(2 * channels).enumerate() {
                for c in 0..channels {
                    out[c * plane + i] = u16::from_be_bytes([px[2 * c], px[2 * c + 1]]);
                }
            }
            RasterData::U16(out)
        }
        other => return Err(Error::UnsupportedDtype(format!("PNG bit depth {other:?}"))),
    };
    RasterImage::new(default_band_names(channels), h, w, data)
}

/// Reads a single-channel 8-bit PNG (palette indices or gray values) as a mask.
pub fn load_png_mask(path: &Path) -> Result<LabelMask> {
    let bytes = read_file(path)?;
    let bad = |e: png::DecodingError| Error::CorruptHeader(format!("{}: {e}", path.display()));
    // No EXPAND: palette images must yield their raw indices.
    let mut reader = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(bad)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    if info.bit_depth != png::BitDepth::Eight || info.color_type.samples() != 1 {
        return Err(Error::UnsupportedDtype(format!(
            "mask PNG must be 8-bit single channel, got {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    LabelMask::new(info.height as usize, info.width as usize, buf)
}

/// PASCAL VOC colormap, 256 RGB triples.
pub fn voc_palette() -> Vec<u8> {
    let mut palette = Vec::with_capacity(256 * 3);
    for i in 0..256u32 {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = i;
        for shift in (0..8).rev() {
            r |= ((c & 1) as u8) << shift;
            g |= (((c >> 1) & 1) as u8) << shift;
            b |= (((c >> 2) & 1) as u8) << shift;
            c >>= 3;
        }
        palette.extend_from_slice(&[r, g, b]);
    }
    palette
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    palette: Option<Vec<u8>>,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let map = |e: png::EncodingError| Error::CorruptHeader(format!("PNG encoding failed: {e}"));
        let mut writer = enc.write_header().map_err(map)?;
        writer.write_image_data(data).map_err(map)?;
        writer.finish().map_err(map)?;
    }
    Ok(out)
}

pub fn save_label_png(mask: &LabelMask, path: &Path) -> Result<()> {
    let bytes = encode_png(
        mask.width(),
        mask.height(),
        png::ColorType::Indexed,
        png::BitDepth::Eight,
        Some(voc_palette()),
        mask.data(),
    )?;
    atomic_write(path, &bytes)
}

/// Writes one channel as a grayscale PNG. `u8`/`u16` planes keep their
/// values; `f32` planes are min-max stretched to 8 bits.
pub fn save_plane_png(image: &RasterImage, channel: usize, path: &Path) -> Result<()> {
    let (w, h) = (image.width(), image.height());
    let bytes = match image.data() {
        RasterData::U8(_) => {
            encode_png(w, h, png::ColorType::Grayscale, png::BitDepth::Eight, None, &image.plane_bytes(channel))?
        }
        RasterData::U16(_) => {
            let be: Vec<u8> = image.plane_f32(channel).iter().flat_map(|&v| (v as u16).to_be_bytes()).collect();
            encode_png(w, h, png::ColorType::Grayscale, png::BitDepth::Sixteen, None, &be)?
        }
        RasterData::F32(_) => {
            let plane = image.plane_f32(channel);
            let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let px: Vec<u8> = plane.iter().map(|&v| ((v - lo) / span * 255.0).round() as u8).collect();
            encode_png(w, h, png::ColorType::Grayscale, png::BitDepth::Eight, None, &px)?
        }
    };
    atomic_write(path, &bytes)
}

/// Writes a 1 to 4 channel `u8` image as an 8-bit PNG.
pub fn save_png(image: &RasterImage, path: &Path) -> Result<()> {
    let color = match image.channels() {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => return Err(Error::UnsupportedDtype(format!("{c}-channel PNG"))),
    };
    let RasterData::U8(data) = image.data() else {
        return Err(Error::UnsupportedDtype("PNG export needs u8 data".into()));
    };
    let plane = image.plane_len();
    let mut interleaved = Vec::with_capacity(data.len());
    for i in 0..plane {
        for c in 0..image.channels() {
            interleaved.push(data[c * plane + i]);
        }
    }
    let bytes = encode_png(image.width(), image.height(), color, png::BitDepth::Eight, None, &interleaved)?;
    atomic_write(path, &bytes)
}
