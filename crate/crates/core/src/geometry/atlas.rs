//! Unified surface space: a square atlas image split into a hand and an
//! object sub-rectangle, where every texel is bound to exactly one face.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{FaceUv, GeometryError, Instance, Mesh, Result};

/// Pixel-aligned rectangle inside the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x as f64
            && p.y >= self.y as f64
            && p.x <= (self.x + self.width) as f64
            && p.y <= (self.y + self.height) as f64
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub atlas_size: u32,
    pub rect: Rect,
    /// Inset of each triangle from its cell border (pixels).
    pub margin: f64,
}

/// Cell arrangement chosen by [`build_grid_atlas`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCells {
    pub cells_per_row: usize,
    pub cell_side: f64,
}

/// Lays faces out one per square cell, row-major, `ceil(sqrt(N_f))` cells per row.
///
/// Inside a cell of side `c` the face gets the right triangle
/// `(m, m), (c − m, m), (m, c − m)`. Returned UVs are normalized by the atlas size.
pub fn build_grid_atlas(mesh: &Mesh, params: &GridParams) -> Result<(Vec<FaceUv>, GridCells)> {
    let n = mesh.faces().len();
    if n == 0 {
        return Err(GeometryError::EmptyMesh);
    }
    let per_row = (n as f64).sqrt().ceil() as usize;
    let per_row = if per_row * per_row < n {
        per_row + 1
    } else {
        per_row
    };
    let rect = params.rect;
    let side = rect.width.min(rect.height) as f64 / per_row as f64;
    let m = params.margin;
    if side - 2.0 * m < 2.0 {
        return Err(GeometryError::CellTooSmall {
            cell_side: side,
            margin: m,
        });
    }
    let scale = params.atlas_size as f64;
    let uvs = (0..n)
        .map(|f| {
            let ox = rect.x as f64 + (f % per_row) as f64 * side;
            let oy = rect.y as f64 + (f / per_row) as f64 * side;
            [
                Vector2::new(ox + m, oy + m),
                Vector2::new(ox + side - m, oy + m),
                Vector2::new(ox + m, oy + side - m),
            ]
            .map(|p| p / scale)
        })
        .collect();
    Ok((
        uvs,
        GridCells {
            cells_per_row: per_row,
            cell_side: side,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasLayout {
    pub atlas_size: u32,
    pub margin: f64,
    pub hand_rect: Rect,
    pub object_rect: Rect,
    /// Present when the hand faces were laid out on a grid (always, when a hand exists).
    pub hand_grid: Option<GridCells>,
    /// Present only when the object had no UVs of its own.
    pub object_grid: Option<GridCells>,
}

impl AtlasLayout {
    /// Hand on the left half, object on the right half.
    pub fn split(atlas_size: u32, margin: f64) -> Self {
        let half = atlas_size / 2;
        Self {
            atlas_size,
            margin,
            hand_rect: Rect {
                x: 0,
                y: 0,
                width: half,
                height: atlas_size,
            },
            object_rect: Rect {
                x: half,
                y: 0,
                width: atlas_size - half,
                height: atlas_size,
            },
            hand_grid: None,
            object_grid: None,
        }
    }

    pub fn rect_for(&self, instance: Instance) -> Rect {
        match instance {
            Instance::Hand => self.hand_rect,
            Instance::Object => self.object_rect,
        }
    }
}

/// Atlas-space triangles for every face of the combined hand+object face list.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedSpace {
    pub layout: AtlasLayout,
    /// Per-face triangle in atlas pixel coordinates, same order as [`super::ViewGeometry::faces`].
    pub face_coords: Vec<[Vector2<f64>; 3]>,
    pub instances: Vec<Instance>,
    pub hand_faces: usize,
}

impl UnifiedSpace {
    /// The hand always gets a grid atlas. The object keeps its own UVs, scaled
    /// into the object rectangle, and falls back to a grid when it has none.
    pub fn build(
        hand: Option<&Mesh>,
        object: Option<&Mesh>,
        atlas_size: u32,
        margin: f64,
    ) -> Result<Self> {
        let mut layout = AtlasLayout::split(atlas_size, margin);
        let scale = atlas_size as f64;
        let mut face_coords = Vec::new();
        let mut instances = Vec::new();

        if let Some(hand) = hand {
            let (uvs, cells) = build_grid_atlas(
                hand,
                &GridParams {
                    atlas_size,
                    rect: layout.hand_rect,
                    margin,
                },
            )?;
            layout.hand_grid = Some(cells);
            face_coords.extend(uvs.iter().map(|t| t.map(|p| p * scale)));
            instances.extend(std::iter::repeat_n(Instance::Hand, uvs.len()));
        }
        let hand_faces = face_coords.len();

        if let Some(object) = object {
            let rect = layout.object_rect;
            match object.face_uvs() {
                Some(uvs) => {
                    let origin = Vector2::new(rect.x as f64, rect.y as f64);
                    let size = Vector2::new(rect.width as f64, rect.height as f64);
                    face_coords.extend(
                        uvs.iter()
                            .map(|t| t.map(|uv| origin + uv.component_mul(&size))),
                    );
                }
                None => {
                    let (uvs, cells) = build_grid_atlas(
                        object,
                        &GridParams {
                            atlas_size,
                            rect,
                            margin,
                        },
                    )?;
                    layout.object_grid = Some(cells);
                    face_coords.extend(uvs.iter().map(|t| t.map(|p| p * scale)));
                }
            }
            instances.extend(std::iter::repeat_n(Instance::Object, object.faces().len()));
        }

        Ok(Self {
            layout,
            face_coords,
            instances,
            hand_faces,
        })
    }

    pub fn atlas_size(&self) -> usize {
        self.layout.atlas_size as usize
    }

    pub fn face_count(&self) -> usize {
        self.face_coords.len()
    }

    /// Barycenter of a face's atlas triangle.
    pub fn face_centroid(&self, face: usize) -> Vector2<f64> {
        let [a, b, c] = self.face_coords[face];
        (a + b + c) / 3.0
    }

    /// Unrolled geometry for rasterizing the atlas: three vertices per face, depth 0.
    pub fn raster_geometry(&self) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
        let coords = self
            .face_coords
            .iter()
            .flatten()
            .map(|p| Vector3::new(p.x, p.y, 0.0))
            .collect();
        let faces = (0..self.face_coords.len() as u32)
            .map(|f| [3 * f, 3 * f + 1, 3 * f + 2])
            .collect();
        (coords, faces)
    }

    /// Maps an atlas point in the object rectangle to normalized texture coordinates.
    pub fn object_texture_coords(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let r = self.layout.object_rect;
        Vector2::new(
            (p.x - r.x as f64) / r.width as f64,
            (p.y - r.y as f64) / r.height as f64,
        )
    }
}
