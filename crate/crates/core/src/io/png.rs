//! PNG output with fixed encoder settings, so identical buffers give identical files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, RgbaImage};

use super::IoError;
use crate::grid::{Grid, Mask};

fn encode(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let enc = PngEncoder::new_with_quality(
        BufWriter::new(file),
        CompressionType::Default,
        FilterType::Adaptive,
    );
    enc.write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| IoError::image(path, e))
}

pub fn write_rgba(path: impl AsRef<Path>, image: &RgbaImage) -> Result<(), IoError> {
    encode(
        path.as_ref(),
        image.as_raw(),
        image.width() as usize,
        image.height() as usize,
        ExtendedColorType::Rgba8,
    )
}

/// 8-bit grayscale, 255 where set.
pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<(), IoError> {
    let bytes: Vec<u8> = mask
        .as_slice()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    encode(
        path.as_ref(),
        &bytes,
        mask.width(),
        mask.height(),
        ExtendedColorType::L8,
    )
}

/// 16-bit grayscale holding `face + 1` (0 = background), clamped to 65535.
pub fn write_face_map(path: impl AsRef<Path>, faces: &Grid<i32>) -> Result<(), IoError> {
    let bytes: Vec<u8> = faces
        .as_slice()
        .iter()
        .flat_map(|&f| ((f as i64 + 1).clamp(0, u16::MAX as i64) as u16).to_ne_bytes())
        .collect();
    encode(
        path.as_ref(),
        &bytes,
        faces.width(),
        faces.height(),
        ExtendedColorType::L16,
    )
}

/// Reads any PNG as 8-bit RGBA.
pub fn read_rgba(path: impl AsRef<Path>) -> Result<RgbaImage, IoError> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| IoError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IoError::io(path, e))?
        .decode()
        .map_err(|e| IoError::image(path, e))?;
    Ok(img.to_rgba8())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PngInfo {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub bits_per_channel: u8,
    /// Per-channel (min, max) in raw sample units.
    pub ranges: Vec<(u16, u16)>,
    /// Fraction of pixels with non-zero alpha (1.0 without an alpha channel).
    pub valid_fraction: f64,
}

/// Summary statistics used by `inspect`.
pub fn read_png_info(path: impl AsRef<Path>) -> Result<PngInfo, IoError> {
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|e| IoError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IoError::io(path, e))?
        .decode()
        .map_err(|e| IoError::image(path, e))?;
    let color = img.color();
    let channels = color.channel_count();
    let bits = (color.bits_per_pixel() / channels as u16) as u8;
    let samples: Vec<u16> = match bits {
        16 => img.to_rgba16().into_raw(),
        _ => img
            .to_rgba8()
            .into_raw()
            .into_iter()
            .map(u16::from)
            .collect(),
    };
    let mut ranges = vec![(u16::MAX, 0u16); channels as usize];
    let n = (img.width() * img.height()) as usize;
    let mut opaque = 0usize;
    for px in samples.chunks_exact(4) {
        let logical: &[u16] = match channels {
            1 => &px[..1],
            2 => &[px[0], px[3]],
            3 => &px[..3],
            _ => px,
        };
        for (r, &v) in ranges.iter_mut().zip(logical) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
        if px[3] > 0 {
            opaque += 1;
        }
    }
    Ok(PngInfo {
        width: img.width(),
        height: img.height(),
        channels,
        bits_per_channel: bits,
        ranges,
        valid_fraction: if n == 0 {
            0.0
        } else {
            opaque as f64 / n as f64
        },
    })
}
