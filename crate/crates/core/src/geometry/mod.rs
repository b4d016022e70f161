//! Mesh and camera model, rigid posing, projection to screen space.
//!
//! Conventions used throughout the crate: the camera looks down `+z`, the
//! image origin is the top-left corner, `x` grows right, `y` grows down and
//! pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

mod atlas;
mod obj;

use std::path::PathBuf;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use atlas::{build_grid_atlas, AtlasLayout, GridCells, GridParams, Rect, UnifiedSpace};
pub use obj::{load_obj, parse_obj, write_obj};

/// Minimum camera-frame depth for a projectable vertex (meters).
pub const MIN_DEPTH: f64 = 1e-6;
/// Faces with a 3D area at or below this (m²) are flagged degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Allowed ‖R·Rᵀ − I‖∞ for a rotation.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("rotation is not orthonormal (max |R·Rᵀ − I| = {0:e})")]
    NonOrthonormal(f64),
    #[error("vertex {0} is behind the camera")]
    BehindCamera(usize),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("atlas cell too small: side {cell_side:.3} px with margin {margin} px")]
    CellTooSmall { cell_side: f64, margin: f64 },
    #[error("hand topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instance {
    Hand,
    Object,
}

/// Per-face UV triplet, normalized, origin top-left (`v` grows down).
pub type FaceUv = [Vector2<f64>; 3];

/// Triangle mesh with optional per-face texture coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    face_uvs: Option<Vec<FaceUv>>,
    instance: Instance,
}

impl Mesh {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[u32; 3]>,
        face_uvs: Option<Vec<FaceUv>>,
        instance: Instance,
    ) -> Result<Self> {
        let n = vertices.len();
        if let Some((fi, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&i| i as usize >= n))
        {
            return Err(GeometryError::InvalidMesh(format!(
                "face {fi} {f:?} references a vertex beyond count {n}"
            )));
        }
        if let Some(uvs) = &face_uvs {
            if uvs.len() != faces.len() {
                return Err(GeometryError::InvalidMesh(format!(
                    "{} face UV triplets for {} faces",
                    uvs.len(),
                    faces.len()
                )));
            }
        }
        Ok(Self {
            vertices,
            faces,
            face_uvs,
            instance,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_uvs(&self) -> Option<&[FaceUv]> {
        self.face_uvs.as_deref()
    }

    pub fn instance(&self) -> Instance {
        self.instance
    }

    pub fn with_instance(mut self, instance: Instance) -> Self {
        self.instance = instance;
        self
    }

    pub fn with_face_uvs(mut self, uvs: Option<Vec<FaceUv>>) -> Result<Self> {
        if let Some(u) = &uvs {
            if u.len() != self.faces.len() {
                return Err(GeometryError::InvalidMesh(format!(
                    "{} face UV triplets for {} faces",
                    u.len(),
                    self.faces.len()
                )));
            }
        }
        self.face_uvs = uvs;
        Ok(self)
    }

    /// Same topology and UVs with new vertex positions (e.g. a posed frame).
    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::InvalidMesh(format!(
                "{} vertices supplied for a mesh with {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            ..self.clone()
        })
    }

    pub fn face_positions(&self, f: usize) -> [Vector3<f64>; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    /// One flag per face: true when the 3D triangle area is ≤ [`DEGENERATE_AREA`].
    pub fn degenerate_faces(&self) -> Vec<bool> {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.face_positions(f);
                0.5 * (b - a).cross(&(c - a)).norm() <= DEGENERATE_AREA
            })
            .collect()
    }
}

/// Errors with [`GeometryError::TopologyMismatch`] unless both meshes share one face list.
pub fn validate_topology(reference: &Mesh, frame: &Mesh) -> Result<()> {
    if reference.vertices.len() != frame.vertices.len() {
        return Err(GeometryError::TopologyMismatch(format!(
            "vertex count {} vs {}",
            reference.vertices.len(),
            frame.vertices.len()
        )));
    }
    if reference.faces.len() != frame.faces.len() {
        return Err(GeometryError::TopologyMismatch(format!(
            "face count {} vs {}",
            reference.faces.len(),
            frame.faces.len()
        )));
    }
    if let Some(i) = reference
        .faces
        .iter()
        .zip(&frame.faces)
        .position(|(a, b)| a != b)
    {
        return Err(GeometryError::TopologyMismatch(format!(
            "face {i} differs: {:?} vs {:?}",
            reference.faces[i], frame.faces[i]
        )));
    }
    Ok(())
}

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidCamera(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidCamera(
                "non-finite principal point".into(),
            ));
        }
        Ok(())
    }

    /// `(fx·X/Z + cx, fy·Y/Z + cy, Z)`.
    pub fn project_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        )
    }
}

/// Projects camera-frame points to screen coordinates `(x px, y px, z m)`.
pub fn project(camera: &Camera, points: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.z.is_nan() || p.z <= MIN_DEPTH {
                Err(GeometryError::BehindCamera(i))
            } else {
                Ok(camera.project_point(p))
            }
        })
        .collect()
}

/// Rotation followed by translation, `v' = R·v + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let dev = orthonormality_error(&rotation);
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(GeometryError::NonOrthonormal(dev));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds from a row-major 3×3 rotation and a translation.
    pub fn from_row_major(rotation: &[f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::from(translation),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// `‖R·Rᵀ − I‖∞` taken elementwise.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r * r.transpose() - Matrix3::identity()).abs().max()
}

/// Applies `R·v + t` to every vertex; topology and UVs are kept.
pub fn apply_rigid_transform(
    mesh: &Mesh,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Result<Mesh> {
    let tf = RigidTransform::new(*rotation, *translation)?;
    Ok(transform_mesh(mesh, &tf))
}

pub fn transform_mesh(mesh: &Mesh, tf: &RigidTransform) -> Mesh {
    Mesh {
        vertices: mesh.vertices.iter().map(|v| tf.apply(v)).collect(),
        ..mesh.clone()
    }
}

/// Rigid object placed in the camera frame.
#[derive(Debug, Clone)]
pub struct SceneObject {
    /// Canonical (model-frame) mesh.
    pub mesh: Mesh,
    pub pose: RigidTransform,
    pub texture: Option<PathBuf>,
}

impl SceneObject {
    pub fn posed_mesh(&self) -> Mesh {
        transform_mesh(&self.mesh, &self.pose)
    }
}

/// One frame: posed hand, posed object, camera and optional image.
#[derive(Debug, Clone)]
pub struct Scene {
    pub hand: Option<Mesh>,
    pub object: Option<SceneObject>,
    pub camera: Camera,
    pub image: Option<PathBuf>,
}

/// Hand and object merged into one indexable face list as seen by one camera.
///
/// Hand faces come first (`0..hand_faces`), object faces follow with vertex
/// indices offset by the hand vertex count.
#[derive(Debug, Clone)]
pub struct ViewGeometry {
    /// Camera-frame positions (meters).
    pub positions: Vec<Vector3<f64>>,
    /// Screen coordinates `(x px, y px, z m)`.
    pub screen: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub instances: Vec<Instance>,
    /// Faces the rasterizer must ignore (3D-degenerate).
    pub skip: Vec<bool>,
    pub hand_faces: usize,
    pub width: usize,
    pub height: usize,
}

impl Scene {
    pub fn hand_face_count(&self) -> usize {
        self.hand.as_ref().map_or(0, |m| m.faces().len())
    }

    pub fn object_face_count(&self) -> usize {
        self.object.as_ref().map_or(0, |o| o.mesh.faces().len())
    }

    pub fn view_geometry(&self) -> Result<ViewGeometry> {
        let posed_object = self.object.as_ref().map(SceneObject::posed_mesh);
        let meshes: Vec<&Mesh> = self.hand.iter().chain(posed_object.iter()).collect();
        let mut positions = Vec::new();
        let mut faces = Vec::new();
        let mut instances = Vec::new();
        let mut skip = Vec::new();
        for (slot, mesh) in meshes.into_iter().enumerate() {
            let offset = positions.len() as u32;
            positions.extend_from_slice(mesh.vertices());
            faces.extend(mesh.faces().iter().map(|f| f.map(|i| i + offset)));
            let inst = if slot == 0 && self.hand.is_some() {
                Instance::Hand
            } else {
                Instance::Object
            };
            instances.extend(std::iter::repeat_n(inst, mesh.faces().len()));
            skip.extend(mesh.degenerate_faces());
        }
        let screen = project(&self.camera, &positions)?;
        Ok(ViewGeometry {
            positions,
            screen,
            faces,
            instances,
            skip,
            hand_faces: self.hand_face_count(),
            width: self.camera.width as usize,
            height: self.camera.height as usize,
        })
    }
}
