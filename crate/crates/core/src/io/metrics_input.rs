//! Prediction JSON-lines and the object registry.
//!
//! Each prediction line is one [`FrameRecord`]. The registry maps object ids
//! to `{"vertices_path": "model.obj", "diameter_mm": 172.3}`; the OBJ is read
//! in millimeters unless `"scale_to_mm"` says otherwise, and a missing
//! diameter is computed from the vertices.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use super::IoError;
use crate::geometry::{load_obj, GeometryError, Instance};
use crate::metrics::{object_diameter, FrameRecord, ObjectModel};

/// Parses prediction lines, skipping blank ones. Errors carry 1-based line numbers.
pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<FrameRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| IoError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        for (name, joints) in [
            ("pred_joints", &rec.pred_joints),
            ("gt_joints", &rec.gt_joints),
        ] {
            if joints.len() != crate::metrics::NUM_JOINTS {
                return Err(IoError::Json {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("{name} has {} joints, expected 21", joints.len()),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_predictions(&text, path)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub vertices_path: String,
    pub diameter_mm: Option<f64>,
    pub scale_to_mm: Option<f64>,
}

pub fn read_registry(path: impl AsRef<Path>) -> Result<BTreeMap<String, ObjectModel>, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let entries: BTreeMap<String, RegistryEntry> =
        serde_json::from_str(&text).map_err(|e| IoError::Json {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = BTreeMap::new();
    for (id, e) in entries {
        let obj_path = base.join(&e.vertices_path);
        let mesh = load_obj(&obj_path, Instance::Object).map_err(|err| match err {
            GeometryError::Io { source, .. } => IoError::io(&obj_path, source),
            other => other.into(),
        })?;
        let scale = e.scale_to_mm.unwrap_or(1.0);
        let vertices: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| v * scale).collect();
        let diameter = match e.diameter_mm {
            Some(d) if d > 0.0 => d,
            Some(_) => return Err(IoError::SchemaError(format!("{id}.diameter_mm"))),
            None => object_diameter(&vertices)
                .map_err(|_| IoError::SchemaError(format!("{id}.vertices_path")))?,
        };
        out.insert(id, ObjectModel { vertices, diameter });
    }
    Ok(out)
}
