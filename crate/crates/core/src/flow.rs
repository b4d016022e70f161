//! Flow fields between the source view, the unified atlas and the target
//! view, plus everything built from them: visibility, warping, atlas
//! assembly, coarse target synthesis, topology maps and the composed
//! target-to-source flow.
//!
//! A flow value is a continuous pixel coordinate in the destination space
//! (pixel centers at `+0.5`). Invalid entries are NaN.

use image::{Rgba, RgbaImage};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{AtlasLayout, Instance, UnifiedSpace};
use crate::grid::{Grid, Mask};
use crate::raster::RasterBuffers;

/// Number of dilation passes run after atlas assembly.
pub const DILATION_TEXELS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("face {face} references vertex {vertex} but only {count} coordinates exist")]
    IndexOutOfRange {
        face: usize,
        vertex: u32,
        count: usize,
    },
    #[error("size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("scene declares an object but no object texture was supplied")]
    MissingObjectTexture,
    #[error("face {0} has no atlas coordinates")]
    MissingUvs(usize),
    #[error("flows come from different atlas layouts: {0}")]
    LayoutMismatch(String),
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;

/// Dense per-pixel coordinates into another image space.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    vectors: Grid<[f32; 2]>,
}

const INVALID: [f32; 2] = [f32::NAN, f32::NAN];

impl FlowField {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            vectors: Grid::filled(width, height, INVALID),
        }
    }

    /// Wraps raw vectors; any entry with a NaN component is normalized to fully invalid.
    pub fn from_grid(vectors: Grid<[f32; 2]>) -> Self {
        let mut vectors = vectors;
        for v in vectors.as_mut_slice() {
            if !(v[0].is_finite() && v[1].is_finite()) {
                *v = INVALID;
            }
        }
        Self { vectors }
    }

    /// Identity flow: every pixel points at its own center.
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            vectors: Grid::from_fn(width, height, |x, y| [x as f32 + 0.5, y as f32 + 0.5]),
        }
    }

    pub fn width(&self) -> usize {
        self.vectors.width()
    }

    pub fn height(&self) -> usize {
        self.vectors.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.vectors.dims()
    }

    pub fn vectors(&self) -> &Grid<[f32; 2]> {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        let v = self.vectors.get(x, y);
        v[0].is_finite()
            .then(|| Vector2::new(v[0] as f64, v[1] as f64))
    }

    pub fn set(&mut self, x: usize, y: usize, v: Option<Vector2<f64>>) {
        self.vectors
            .set(x, y, v.map_or(INVALID, |v| [v.x as f32, v.y as f32]));
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.vectors.get(x, y)[0].is_finite()
    }

    pub fn valid_mask(&self) -> Mask {
        self.vectors.map(|v| v[0].is_finite())
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.vectors.is_empty() {
            return 0.0;
        }
        self.valid_mask().count() as f64 / self.vectors.len() as f64
    }

    fn build(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> Option<Vector2<f64>> + Sync,
    ) -> Self {
        let mut vectors = Grid::filled(width, height, INVALID);
        if width > 0 {
            vectors
                .as_mut_slice()
                .par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| {
                    for (x, out) in row.iter_mut().enumerate() {
                        if let Some(v) = f(x, y) {
                            *out = [v.x as f32, v.y as f32];
                        }
                    }
                });
        }
        Self { vectors }
    }
}

/// Texels (or pixels) whose bound face is seen in the interrogated view.
pub type VisibilityMask = Mask;

/// The atlas image plus which texels carry real content.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedTexture {
    pub image: RgbaImage,
    pub filled: Mask,
    pub layout: AtlasLayout,
}

/// Per-pixel atlas barycenter of the visible face; NaN on background.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyMap {
    pub values: Grid<[f32; 2]>,
}

impl TopologyMap {
    pub fn get(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        let v = self.values.get(x, y);
        v[0].is_finite()
            .then(|| Vector2::new(v[0] as f64, v[1] as f64))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Nearest,
    Bilinear,
}

/// Pixel index containing the continuous coordinate, if inside the image.
#[inline]
pub fn pixel_of(p: Vector2<f64>, width: usize, height: usize) -> Option<(usize, usize)> {
    let (x, y) = (p.x.floor(), p.y.floor());
    (x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64)
        .then_some((x as usize, y as usize))
}

fn texel(image: &RgbaImage, x: i64, y: i64) -> [f32; 4] {
    let x = x.clamp(0, image.width() as i64 - 1) as u32;
    let y = y.clamp(0, image.height() as i64 - 1) as u32;
    image.get_pixel(x, y).0.map(f32::from)
}

/// Bilinear sample at a continuous coordinate; coordinates are clamped to the border.
pub fn sample_bilinear(image: &RgbaImage, x: f64, y: f64) -> [f32; 4] {
    let (px, py) = (x - 0.5, y - 0.5);
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = ((px - x0) as f32, (py - y0) as f32);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let p00 = texel(image, x0, y0);
    let p10 = texel(image, x0 + 1, y0);
    let p01 = texel(image, x0, y0 + 1);
    let p11 = texel(image, x0 + 1, y0 + 1);
    std::array::from_fn(|c| {
        let top = p00[c] + (p10[c] - p00[c]) * fx;
        let bottom = p01[c] + (p11[c] - p01[c]) * fx;
        top + (bottom - top) * fy
    })
}

/// Nearest sample: the pixel containing the coordinate, clamped to the border.
pub fn sample_nearest(image: &RgbaImage, x: f64, y: f64) -> [f32; 4] {
    texel(image, x.floor() as i64, y.floor() as i64)
}

pub fn to_rgba8(v: [f32; 4]) -> Rgba<u8> {
    Rgba(v.map(|c| (c + 0.5).floor().clamp(0.0, 255.0) as u8))
}

fn build_image(
    width: usize,
    height: usize,
    f: impl Fn(usize, usize) -> Option<Rgba<u8>> + Sync,
) -> RgbaImage {
    let mut buf = vec![0u8; width * height * 4];
    if width > 0 {
        buf.par_chunks_mut(width * 4)
            .enumerate()
            .for_each(|(y, row)| {
                for (x, px) in row.chunks_exact_mut(4).enumerate() {
                    if let Some(c) = f(x, y) {
                        px.copy_from_slice(&c.0);
                    }
                }
            });
    }
    RgbaImage::from_raw(width as u32, height as u32, buf).expect("buffer sized from dims")
}

/// Backward warp: `out(x, y) = sample(image, flow(x, y))`, transparent black where invalid.
pub fn warp(flow: &FlowField, image: &RgbaImage, mode: Sampling) -> RgbaImage {
    let (w, h) = flow.dims();
    build_image(w, h, |x, y| {
        let p = flow.get(x, y)?;
        Some(to_rgba8(match mode {
            Sampling::Nearest => sample_nearest(image, p.x, p.y),
            Sampling::Bilinear => sample_bilinear(image, p.x, p.y),
        }))
    })
}

/// [`warp`] with an explicit output size that must match the flow.
pub fn warp_to(
    flow: &FlowField,
    image: &RgbaImage,
    mode: Sampling,
    width: usize,
    height: usize,
) -> Result<RgbaImage> {
    if flow.dims() != (width, height) {
        return Err(FlowError::SizeMismatch {
            expected: (width, height),
            got: flow.dims(),
        });
    }
    Ok(warp(flow, image, mode))
}

fn check_face_refs(faces: &[[u32; 3]], count: usize) -> Result<()> {
    for (fi, f) in faces.iter().enumerate() {
        if let Some(&vertex) = f.iter().find(|&&v| v as usize >= count) {
            return Err(FlowError::IndexOutOfRange {
                face: fi,
                vertex,
                count,
            });
        }
    }
    Ok(())
}

/// Atlas → source flow: each texel points at the source-screen position of
/// its surface point, `Σᵢ Wᵘᵢ · Pˢ(vertex i of Fᵘ)`.
pub fn flow_unified_from_source(
    u_raster: &RasterBuffers,
    source_screen: &[Vector3<f64>],
    faces: &[[u32; 3]],
) -> Result<FlowField> {
    check_face_refs(faces, source_screen.len())?;
    if let Some(bad) = u_raster
        .face
        .as_slice()
        .iter()
        .find(|&&f| f >= 0 && f as usize >= faces.len())
    {
        return Err(FlowError::MissingUvs(*bad as usize));
    }
    let (w, h) = u_raster.dims();
    Ok(FlowField::build(w, h, |x, y| {
        let f = u_raster.face_at(x, y)?;
        let wts = u_raster.bary.get(x, y);
        let tri = faces[f];
        let mut p = Vector2::zeros();
        for i in 0..3 {
            let s = source_screen[tri[i] as usize];
            p += wts[i] * Vector2::new(s.x, s.y);
        }
        Some(p)
    }))
}

/// A texel is visible when its flow lands inside the source image on a pixel
/// whose visible face is the texel's own face.
pub fn visibility_unified_from_source(
    u_raster: &RasterBuffers,
    s_raster: &RasterBuffers,
    flow: &FlowField,
) -> VisibilityMask {
    let (w, h) = u_raster.dims();
    let (sw, sh) = s_raster.dims();
    Grid::from_fn(w, h, |x, y| {
        let Some(f) = u_raster.face_at(x, y) else {
            return false;
        };
        let Some(p) = flow.get(x, y) else {
            return false;
        };
        pixel_of(p, sw, sh).is_some_and(|(sx, sy)| s_raster.face_at(sx, sy) == Some(f))
    })
}

/// Builds the atlas without the final dilation: hand texels from the
/// visible source pixels, object texels from the stored texture.
pub fn assemble_unified_texture_raw(
    source_image: &RgbaImage,
    flow_us: &FlowField,
    visibility: &VisibilityMask,
    object_texture: Option<&RgbaImage>,
    space: &UnifiedSpace,
    u_raster: &RasterBuffers,
) -> Result<UnifiedTexture> {
    let size = space.atlas_size();
    for (what, dims) in [
        ("unified raster", u_raster.dims()),
        ("flow", flow_us.dims()),
        ("visibility", visibility.dims()),
    ] {
        if dims != (size, size) {
            log::debug!("{what} does not match the atlas");
            return Err(FlowError::SizeMismatch {
                expected: (size, size),
                got: dims,
            });
        }
    }
    let has_object = space.instances.contains(&Instance::Object);
    if has_object && object_texture.is_none() {
        return Err(FlowError::MissingObjectTexture);
    }
    let texel_color = |x: usize, y: usize| -> Option<Rgba<u8>> {
        let f = u_raster.face_at(x, y)?;
        match space.instances.get(f)? {
            Instance::Hand => {
                if !*visibility.get(x, y) {
                    return None;
                }
                let p = flow_us.get(x, y)?;
                Some(to_rgba8(sample_bilinear(source_image, p.x, p.y)))
            }
            Instance::Object => {
                let tex = object_texture?;
                let uv = space.object_texture_coords(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
                Some(to_rgba8(sample_bilinear(
                    tex,
                    uv.x * tex.width() as f64,
                    uv.y * tex.height() as f64,
                )))
            }
        }
    };
    let image = build_image(size, size, texel_color);
    let filled = Grid::from_fn(size, size, |x, y| {
        u_raster
            .face_at(x, y)
            .is_some_and(|f| match space.instances[f] {
                Instance::Hand => *visibility.get(x, y) && flow_us.is_valid(x, y),
                Instance::Object => true,
            })
    });
    Ok(UnifiedTexture {
        image,
        filled,
        layout: space.layout.clone(),
    })
}

/// Grows filled texels into unfilled 8-neighbors, `passes` rings deep. Each
/// new texel takes the rounded mean of the filled neighbors from the previous ring.
pub fn dilate(tex: &mut UnifiedTexture, passes: usize) {
    let (w, h) = tex.filled.dims();
    for _ in 0..passes {
        let src = tex.image.clone();
        let known = tex.filled.clone();
        let mut grew = false;
        for y in 0..h {
            for x in 0..w {
                if *known.get(x, y) {
                    continue;
                }
                let mut sum = [0u32; 4];
                let mut n = 0u32;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if known.try_get(nx, ny) == Some(&true) {
                            let p = src.get_pixel(nx as u32, ny as u32).0;
                            for c in 0..4 {
                                sum[c] += p[c] as u32;
                            }
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    tex.image.put_pixel(
                        x as u32,
                        y as u32,
                        Rgba(sum.map(|s| ((s + n / 2) / n) as u8)),
                    );
                    tex.filled.set(x, y, true);
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
}

/// Full atlas assembly: [`assemble_unified_texture_raw`] followed by
/// [`DILATION_TEXELS`] dilation passes.
pub fn assemble_unified_texture(
    source_image: &RgbaImage,
    flow_us: &FlowField,
    visibility: &VisibilityMask,
    object_texture: Option<&RgbaImage>,
    space: &UnifiedSpace,
    u_raster: &RasterBuffers,
) -> Result<UnifiedTexture> {
    let mut tex = assemble_unified_texture_raw(
        source_image,
        flow_us,
        visibility,
        object_texture,
        space,
        u_raster,
    )?;
    dilate(&mut tex, DILATION_TEXELS);
    Ok(tex)
}

fn check_target_faces(t_raster: &RasterBuffers, space: &UnifiedSpace) -> Result<()> {
    match t_raster
        .face
        .as_slice()
        .iter()
        .find(|&&f| f >= 0 && f as usize >= space.face_count())
    {
        Some(&f) => Err(FlowError::MissingUvs(f as usize)),
        None => Ok(()),
    }
}

/// Target → atlas flow: `Σᵢ Wᵗᵢ · Pᵘ(corner i of Fᵗ)` in atlas pixels.
pub fn flow_target_from_unified(
    t_raster: &RasterBuffers,
    space: &UnifiedSpace,
) -> Result<FlowField> {
    check_target_faces(t_raster, space)?;
    let (w, h) = t_raster.dims();
    Ok(FlowField::build(w, h, |x, y| {
        let f = t_raster.face_at(x, y)?;
        let wts = t_raster.bary.get(x, y);
        let tri = &space.face_coords[f];
        Some(tri[0] * wts[0] + tri[1] * wts[1] + tri[2] * wts[2])
    }))
}

/// Coarse target image: the atlas sampled bilinearly through the target flow.
pub fn synthesize_coarse_target(flow_tu: &FlowField, tex: &UnifiedTexture) -> RgbaImage {
    warp(flow_tu, &tex.image, Sampling::Bilinear)
}

/// Atlas barycenter of the face visible at each target pixel.
pub fn topology_map(t_raster: &RasterBuffers, space: &UnifiedSpace) -> Result<TopologyMap> {
    check_target_faces(t_raster, space)?;
    let centroids: Vec<[f32; 2]> = (0..space.face_count())
        .map(|f| {
            let c = space.face_centroid(f);
            [c.x as f32, c.y as f32]
        })
        .collect();
    Ok(TopologyMap {
        values: t_raster.face.map(|&f| {
            if f >= 0 {
                centroids[f as usize]
            } else {
                INVALID
            }
        }),
    })
}

/// Texel offsets tried after the containing texel, nearest first.
const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
];

/// Target → source flow through the atlas.
///
/// Each target pixel's atlas point is resolved to the nearest texel that has
/// a valid atlas → source flow (the containing texel first, then its 8
/// neighbors by distance). The result is invalid when there is none or when
/// that texel is not visible in the source. Since the atlas → source flow is
/// affine within a face, the texel value is refined to the exact atlas point
/// with a first-order correction from same-face neighboring texels.
pub fn compose_flow_target_from_source(
    flow_tu: &FlowField,
    flow_us: &FlowField,
    visibility: &VisibilityMask,
    u_raster: &RasterBuffers,
) -> Result<FlowField> {
    let atlas = u_raster.dims();
    for (what, dims) in [
        ("atlas-to-source flow", flow_us.dims()),
        ("visibility", visibility.dims()),
    ] {
        if dims != atlas {
            return Err(FlowError::LayoutMismatch(format!(
                "{what} is {dims:?}, unified raster is {atlas:?}"
            )));
        }
    }
    let (aw, ah) = atlas;
    let usable = |x: i64, y: i64| -> Option<(usize, usize, usize)> {
        let f = *u_raster.face.try_get(x, y)?;
        (f >= 0 && flow_us.is_valid(x as usize, y as usize))
            .then_some((x as usize, y as usize, f as usize))
    };
    let same_face = |x: i64, y: i64, f: usize| {
        usable(x, y)
            .filter(|t| t.2 == f)
            .map(|(x, y, _)| flow_us.get(x, y).unwrap())
    };

    let (w, h) = flow_tu.dims();
    Ok(FlowField::build(w, h, |x, y| {
        let p = flow_tu.get(x, y)?;
        let (bx, by) = (p.x.floor(), p.y.floor());
        if !(bx >= -1.0 && by >= -1.0 && bx <= aw as f64 && by <= ah as f64) {
            return None;
        }
        let (bx, by) = (bx as i64, by as i64);
        let (tx, ty, f) = std::iter::once((0, 0))
            .chain(NEIGHBORS)
            .find_map(|(dx, dy)| usable(bx + dx, by + dy))?;
        if !*visibility.get(tx, ty) {
            return None;
        }
        let base = flow_us.get(tx, ty)?;
        let (ix, iy) = (tx as i64, ty as i64);
        let grad = |dx: i64, dy: i64| {
            same_face(ix + dx, iy + dy, f)
                .map(|n| n - base)
                .or_else(|| same_face(ix - dx, iy - dy, f).map(|n| base - n))
                .unwrap_or_else(Vector2::zeros)
        };
        let d = p - Vector2::new(tx as f64 + 0.5, ty as f64 + 0.5);
        Some(base + grad(1, 0) * d.x + grad(0, 1) * d.y)
    }))
}
