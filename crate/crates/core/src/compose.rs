//! Split-and-combine fusion with geometric masks.
//!
//! `I = (I_h ⊙ M_h + I_o ⊙ (1 − M_h)) ⊙ M_f + I_b ⊙ (1 − M_f)` with boolean
//! masks taken from the target rasterization, an onion-peel background fill
//! and a per-face hole fill for the warped hand.

use image::{Rgba, RgbaImage};
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Grid, Mask};
use crate::raster::{Label, RasterBuffers};

#[derive(Debug, Error, PartialEq)]
pub enum ComposeError {
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("every pixel is foreground, nothing to inpaint from")]
    AllForeground,
    #[error("no hand pixel carries source texture")]
    NoVisibleHand,
    #[error("hand mask is not contained in the foreground mask")]
    MaskNotNested,
}

pub type Result<T, E = ComposeError> = std::result::Result<T, E>;

/// The three stream outputs and the two fusion masks.
#[derive(Debug, Clone)]
pub struct LayerSet {
    pub background: RgbaImage,
    pub object: RgbaImage,
    pub hand: RgbaImage,
    pub hand_mask: Mask,
    pub foreground_mask: Mask,
}

/// `(M_h, M_f)`: visible hand pixels and all foreground pixels.
pub fn analytic_masks(t_raster: &RasterBuffers) -> (Mask, Mask) {
    let hand = t_raster.instance.map(|&l| l == Label::Hand);
    let fg = t_raster.face.map(|&f| f >= 0);
    (hand, fg)
}

fn dims(img: &RgbaImage) -> (usize, usize) {
    (img.width() as usize, img.height() as usize)
}

/// Merges the layers pixel by pixel, channel by channel.
pub fn fuse(layers: &LayerSet) -> Result<RgbaImage> {
    let d = dims(&layers.background);
    for (name, got) in [
        ("object layer", dims(&layers.object)),
        ("hand layer", dims(&layers.hand)),
        ("hand mask", layers.hand_mask.dims()),
        ("foreground mask", layers.foreground_mask.dims()),
    ] {
        if got != d {
            return Err(ComposeError::SizeMismatch(format!(
                "{name} is {got:?}, background is {d:?}"
            )));
        }
    }
    if !layers.hand_mask.is_subset_of(&layers.foreground_mask) {
        return Err(ComposeError::MaskNotNested);
    }
    let (w, _) = d;
    let mut out = layers.background.clone();
    let mh = layers.hand_mask.as_slice();
    let mf = layers.foreground_mask.as_slice();
    let (hand, object, bg) = (
        layers.hand.as_raw(),
        layers.object.as_raw(),
        layers.background.as_raw(),
    );
    if w > 0 {
        out.par_chunks_mut(4).enumerate().for_each(|(i, px)| {
            let h = mh[i] as u16;
            let f = mf[i] as u16;
            for c in 0..4 {
                let k = 4 * i + c;
                let fg = hand[k] as u16 * h + object[k] as u16 * (1 - h);
                px[c] = (fg * f + bg[k] as u16 * (1 - f)) as u8;
            }
        });
    }
    Ok(out)
}

/// Fills `mask`ed pixels ring by ring: every hole pixel touching a known
/// 8-neighbor takes the rounded mean of those neighbors, rings are scanned
/// top-left to bottom-right and only pixels known before the ring contribute.
pub fn inpaint_background(image: &RgbaImage, foreground: &Mask) -> Result<RgbaImage> {
    let d = dims(image);
    if foreground.dims() != d {
        return Err(ComposeError::SizeMismatch(format!(
            "mask is {:?}, image is {d:?}",
            foreground.dims()
        )));
    }
    let (w, h) = d;
    let mut known = foreground.map(|&fg| !fg);
    let holes = known.len() - known.count();
    if holes == 0 {
        return Ok(image.clone());
    }
    if known.count() == 0 {
        return Err(ComposeError::AllForeground);
    }
    let mut out = image.clone();
    let mut remaining = holes;
    while remaining > 0 {
        let ring: Vec<Option<[u8; 4]>> = (0..h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let known = &known;
                let out = &out;
                (0..w).map(move |x| {
                    if *known.get(x, y) {
                        return None;
                    }
                    let mut sum = [0u32; 4];
                    let mut n = 0u32;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                            if known.try_get(nx, ny) == Some(&true) {
                                let p = out.get_pixel(nx as u32, ny as u32).0;
                                for c in 0..4 {
                                    sum[c] += p[c] as u32;
                                }
                                n += 1;
                            }
                        }
                    }
                    (n > 0).then(|| sum.map(|s| ((s + n / 2) / n) as u8))
                })
            })
            .collect();
        let mut filled = 0;
        for (i, v) in ring.into_iter().enumerate() {
            if let Some(c) = v {
                let (x, y) = (i % w, i / w);
                out.put_pixel(x as u32, y as u32, Rgba(c));
                known.set(x, y, true);
                filled += 1;
            }
        }
        debug_assert!(filled > 0, "a non-empty known set always reaches a hole");
        remaining -= filled;
    }
    Ok(out)
}

/// Fills hand pixels that received no source texture.
///
/// A hole takes the mean color of the textured pixels on its own face, or the
/// mean of all textured hand pixels when its face has none. Other pixels are
/// returned untouched.
pub fn fill_hand_holes(
    coarse_hand: &RgbaImage,
    t_raster: &RasterBuffers,
    textured: &Mask,
) -> Result<RgbaImage> {
    let d = dims(coarse_hand);
    if t_raster.dims() != d || textured.dims() != d {
        return Err(ComposeError::SizeMismatch(format!(
            "hand layer {d:?}, raster {:?}, validity {:?}",
            t_raster.dims(),
            textured.dims()
        )));
    }
    let is_hand = |x: usize, y: usize| *t_raster.instance.get(x, y) == Label::Hand;
    let mut per_face: std::collections::HashMap<i32, ([u64; 4], u64)> = Default::default();
    let mut global = ([0u64; 4], 0u64);
    let mut holes = Vec::new();
    for (x, y, &f) in t_raster.face.iter_xy() {
        if !is_hand(x, y) {
            continue;
        }
        if *textured.get(x, y) {
            let p = coarse_hand.get_pixel(x as u32, y as u32).0;
            let acc = per_face.entry(f).or_default();
            for c in 0..4 {
                acc.0[c] += p[c] as u64;
                global.0[c] += p[c] as u64;
            }
            acc.1 += 1;
            global.1 += 1;
        } else {
            holes.push((x, y, f));
        }
    }
    if holes.is_empty() {
        return Ok(coarse_hand.clone());
    }
    if global.1 == 0 {
        return Err(ComposeError::NoVisibleHand);
    }
    let mean = |(sum, n): ([u64; 4], u64)| Rgba(sum.map(|s| ((s + n / 2) / n) as u8));
    let fallback = mean(global);
    let mut out = coarse_hand.clone();
    for (x, y, f) in holes {
        let c = per_face.get(&f).map_or(fallback, |&acc| mean(acc));
        out.put_pixel(x as u32, y as u32, c);
    }
    Ok(out)
}

/// Converts a mask to an 8-bit image with values in {0, 255}.
pub fn mask_to_luma(mask: &Mask) -> image::GrayImage {
    let (w, h) = mask.dims();
    image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([if *mask.get(x as usize, y as usize) {
            255
        } else {
            0
        }])
    })
}

/// Pixels whose alpha is non-zero.
pub fn alpha_mask(image: &RgbaImage) -> Mask {
    Grid::from_fn(image.width() as usize, image.height() as usize, |x, y| {
        image.get_pixel(x as u32, y as u32).0[3] > 0
    })
}
