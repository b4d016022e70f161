//! Deterministic software rasterizer producing face-index, barycentric,
//! depth and instance maps.
//!
//! Coverage is tested at pixel centers with a top-left fill rule, so a pixel
//! center lying exactly on an edge shared by two triangles belongs to exactly
//! one of them. There is no back-face culling. Depth is interpolated linearly
//! in screen space and only used for ordering; equal depths resolve to the
//! lower face index. Work is split into horizontal bands that are processed
//! in parallel. Every pixel sees the faces in ascending index order
//! whatever the band assignment, so the output does not depend on the
//! thread count.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Instance;
use crate::grid::Grid;

/// Face-map value of uncovered pixels.
pub const BACKGROUND: i32 = -1;
/// Screen-space triangles with `|cross(b − a, c − a)|` at or below this are skipped.
pub const MIN_SCREEN_AREA: f64 = 1e-12;

const BAND_ROWS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("degenerate triangle (twice area {0:e})")]
    DegenerateTriangle(f64),
    #[error("face {face} references vertex {vertex}, only {count} coordinates supplied")]
    IndexOutOfRange {
        face: usize,
        vertex: u32,
        count: usize,
    },
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Per-pixel instance label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum Label {
    #[default]
    Background = 0,
    Hand = 1,
    Object = 2,
}

impl From<Instance> for Label {
    fn from(i: Instance) -> Self {
        match i {
            Instance::Hand => Label::Hand,
            Instance::Object => Label::Object,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterBuffers {
    /// Visible face index, [`BACKGROUND`] where nothing is drawn.
    pub face: Grid<i32>,
    /// Barycentric weights of the pixel center in the visible face.
    pub bary: Grid<[f64; 3]>,
    /// Interpolated depth, `+inf` on background.
    pub depth: Grid<f32>,
    pub instance: Grid<Label>,
}

impl RasterBuffers {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            face: Grid::filled(width, height, BACKGROUND),
            bary: Grid::filled(width, height, [0.0; 3]),
            depth: Grid::filled(width, height, f32::INFINITY),
            instance: Grid::filled(width, height, Label::Background),
        }
    }

    pub fn width(&self) -> usize {
        self.face.width()
    }

    pub fn height(&self) -> usize {
        self.face.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.face.dims()
    }

    /// Face visible at `(x, y)`, if any.
    pub fn face_at(&self, x: usize, y: usize) -> Option<usize> {
        let f = *self.face.get(x, y);
        (f >= 0).then_some(f as usize)
    }
}

/// Faces to draw, with per-vertex screen coordinates `(x px, y px, z)`.
#[derive(Debug, Clone, Copy)]
pub struct RasterInput<'a> {
    pub coords: &'a [Vector3<f64>],
    pub faces: &'a [[u32; 3]],
    pub instances: &'a [Instance],
    /// Faces flagged `true` are not drawn.
    pub skip: Option<&'a [bool]>,
}

#[inline]
fn edge(a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Whether an edge running `from → to` (in positive orientation) owns the
/// pixel centers lying exactly on it.
#[inline]
fn is_top_left(from: Vector2<f64>, to: Vector2<f64>) -> bool {
    let d = to - from;
    d.y < 0.0 || (d.y == 0.0 && d.x > 0.0)
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
pub fn barycentric(
    p: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
) -> Result<[f64; 3], RasterError> {
    let area = edge(a, b, c);
    if !(area.abs() > MIN_SCREEN_AREA) {
        return Err(RasterError::DegenerateTriangle(area));
    }
    let w0 = edge(b, c, p) / area;
    let w1 = edge(c, a, p) / area;
    Ok([w0, w1, 1.0 - w0 - w1])
}

/// A triangle prepared for scan conversion.
#[derive(Debug, Clone, Copy)]
struct Setup {
    face: u32,
    label: Label,
    v: [Vector2<f64>; 3],
    z: [f64; 3],
    area: f64,
    /// Whether the edge opposite vertex `i` owns its boundary pixels.
    owns: [bool; 3],
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Setup {
    fn new(
        face: usize,
        label: Label,
        p: [Vector3<f64>; 3],
        width: usize,
        height: usize,
    ) -> Option<Self> {
        if p.iter()
            .any(|q| !(q.x.is_finite() && q.y.is_finite() && q.z.is_finite()))
        {
            return None;
        }
        let v = p.map(|q| Vector2::new(q.x, q.y));
        let area = edge(v[0], v[1], v[2]);
        if !(area.abs() > MIN_SCREEN_AREA) {
            return None;
        }
        // edge i runs between the two vertices other than i
        let ends = [(1, 2), (2, 0), (0, 1)];
        let owns = ends.map(|(i, j)| {
            if area > 0.0 {
                is_top_left(v[i], v[j])
            } else {
                is_top_left(v[j], v[i])
            }
        });
        let min_x = v[0].x.min(v[1].x).min(v[2].x);
        let max_x = v[0].x.max(v[1].x).max(v[2].x);
        let min_y = v[0].y.min(v[1].y).min(v[2].y);
        let max_y = v[0].y.max(v[1].y).max(v[2].y);
        // pixel i is a candidate when its center i + 0.5 lies in [min, max]
        let lo = |m: f64| (m - 0.5).ceil().max(0.0);
        let hi = |m: f64, n: usize| (m - 0.5).floor().min(n as f64 - 1.0);
        let (x0, x1) = (lo(min_x), hi(max_x, width));
        let (y0, y1) = (lo(min_y), hi(max_y, height));
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some(Self {
            face: face as u32,
            label,
            v,
            z: p.map(|q| q.z),
            area,
            owns,
            x0: x0 as usize,
            x1: x1 as usize,
            y0: y0 as usize,
            y1: y1 as usize,
        })
    }

    /// Barycentric weights when the pixel center `p` is covered.
    #[inline]
    fn cover(&self, p: Vector2<f64>) -> Option<[f64; 3]> {
        let [a, b, c] = self.v;
        let e = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
        let s = self.area.signum();
        for i in 0..3 {
            let v = e[i] * s;
            if v < 0.0 || (v == 0.0 && !self.owns[i]) {
                return None;
            }
        }
        let w0 = e[0] / self.area;
        let w1 = e[1] / self.area;
        Some([w0, w1, 1.0 - w0 - w1])
    }
}

fn prepare(
    input: &RasterInput<'_>,
    width: usize,
    height: usize,
) -> Result<Vec<Setup>, RasterError> {
    let n = input.faces.len();
    if input.instances.len() != n {
        return Err(RasterError::LengthMismatch {
            what: "instances",
            expected: n,
            got: input.instances.len(),
        });
    }
    if let Some(skip) = input.skip {
        if skip.len() != n {
            return Err(RasterError::LengthMismatch {
                what: "skip flags",
                expected: n,
                got: skip.len(),
            });
        }
    }
    let count = input.coords.len();
    let mut setups = Vec::with_capacity(n);
    for (fi, f) in input.faces.iter().enumerate() {
        if let Some(&vertex) = f.iter().find(|&&i| i as usize >= count) {
            return Err(RasterError::IndexOutOfRange {
                face: fi,
                vertex,
                count,
            });
        }
        if input.skip.is_some_and(|s| s[fi]) {
            continue;
        }
        let p = f.map(|i| input.coords[i as usize]);
        if let Some(s) = Setup::new(fi, input.instances[fi].into(), p, width, height) {
            setups.push(s);
        }
    }
    Ok(setups)
}

/// Rasterizes the faces into `width × height` buffers.
pub fn rasterize(
    input: &RasterInput<'_>,
    width: usize,
    height: usize,
) -> Result<RasterBuffers, RasterError> {
    let setups = prepare(input, width, height)?;
    let mut out = RasterBuffers::empty(width, height);
    if width == 0 || height == 0 || setups.is_empty() {
        return Ok(out);
    }

    let bands = height.div_ceil(BAND_ROWS);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (k, s) in setups.iter().enumerate() {
        for bin in &mut bins[s.y0 / BAND_ROWS..=s.y1 / BAND_ROWS] {
            bin.push(k as u32);
        }
    }

    let chunk = BAND_ROWS * width;
    out.face
        .as_mut_slice()
        .par_chunks_mut(chunk)
        .zip(out.bary.as_mut_slice().par_chunks_mut(chunk))
        .zip(out.depth.as_mut_slice().par_chunks_mut(chunk))
        .zip(out.instance.as_mut_slice().par_chunks_mut(chunk))
        .enumerate()
        .for_each(|(band, (((face, bary), depth), label))| {
            let row0 = band * BAND_ROWS;
            let rows = face.len() / width;
            let mut zbuf = vec![f64::INFINITY; face.len()];
            for &k in &bins[band] {
                let s = &setups[k as usize];
                let ys = s.y0.max(row0)..=s.y1.min(row0 + rows - 1);
                for y in ys {
                    let py = y as f64 + 0.5;
                    for x in s.x0..=s.x1 {
                        let Some(w) = s.cover(Vector2::new(x as f64 + 0.5, py)) else {
                            continue;
                        };
                        let z = w[0] * s.z[0] + w[1] * s.z[1] + w[2] * s.z[2];
                        let i = (y - row0) * width + x;
                        if z < zbuf[i] {
                            zbuf[i] = z;
                            face[i] = s.face as i32;
                            bary[i] = w;
                            label[i] = s.label;
                        }
                    }
                }
            }
            for (d, z) in depth.iter_mut().zip(zbuf) {
                *d = z as f32;
            }
        });
    Ok(out)
}
