//! Minimal Wavefront OBJ reader/writer: `v`, `vt` and `f` records.
//!
//! Faces accept `v`, `v/vt`, `v//vn` and `v/vt/vn` corners, with negative
//! (relative) indices. N-gons are fan-triangulated around their first corner.
//! Texture `v` is flipped on load so that stored UVs use a top-left origin;
//! [`write_obj`] flips it back.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::{FaceUv, GeometryError, Instance, Mesh, Result};

pub fn load_obj(path: impl AsRef<Path>, instance: Instance) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_obj(&text, instance)
}

struct Corner {
    v: u32,
    vt: Option<u32>,
}

fn resolve_index(token: &str, count: usize, line: usize, what: &str) -> Result<u32> {
    let raw: i64 = token.parse().map_err(|_| GeometryError::Parse {
        line,
        reason: format!("bad {what} index {token:?}"),
    })?;
    let idx = match raw {
        0 => None,
        r if r > 0 => Some(r - 1),
        r => Some(count as i64 + r),
    };
    match idx {
        Some(i) if i >= 0 && (i as usize) < count => Ok(i as u32),
        _ => Err(GeometryError::Parse {
            line,
            reason: format!("{what} index {raw} out of range (have {count})"),
        }),
    }
}

fn parse_floats<const N: usize>(
    mut it: std::str::SplitWhitespace<'_>,
    line: usize,
    record: &str,
) -> Result<[f64; N]> {
    let mut out = [0.0f64; N];
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| GeometryError::Parse {
            line,
            reason: format!("`{record}` needs {N} coordinates"),
        })?;
        *slot = tok.parse().map_err(|_| GeometryError::Parse {
            line,
            reason: format!("bad number {tok:?}"),
        })?;
        if !slot.is_finite() {
            return Err(GeometryError::Parse {
                line,
                reason: format!("non-finite coordinate {tok:?}"),
            });
        }
    }
    Ok(out)
}

/// Parses OBJ text into a [`Mesh`].
pub fn parse_obj(text: &str, instance: Instance) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut tex = Vec::new();
    let mut faces = Vec::new();
    let mut face_uvs: Vec<FaceUv> = Vec::new();
    let mut faces_with_uv = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(it, line_no, "v")?;
                vertices.push(Vector3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = parse_floats::<2>(it, line_no, "vt")?;
                tex.push(Vector2::new(u, 1.0 - v));
            }
            "f" => {
                let mut corners = Vec::with_capacity(4);
                for tok in it {
                    let mut parts = tok.split('/');
                    let v = resolve_index(
                        parts.next().unwrap_or(""),
                        vertices.len(),
                        line_no,
                        "vertex",
                    )?;
                    let vt = match parts.next() {
                        Some("") | None => None,
                        Some(t) => Some(resolve_index(t, tex.len(), line_no, "texture")?),
                    };
                    corners.push(Corner { v, vt });
                }
                if corners.len() < 3 {
                    return Err(GeometryError::Parse {
                        line: line_no,
                        reason: format!("face needs at least 3 corners, got {}", corners.len()),
                    });
                }
                let has_uv = corners[0].vt.is_some();
                if corners.iter().any(|c| c.vt.is_some() != has_uv) {
                    return Err(GeometryError::Parse {
                        line: line_no,
                        reason: "face mixes corners with and without texture indices".into(),
                    });
                }
                let tris = corners.len() - 2;
                if has_uv {
                    faces_with_uv += tris;
                }
                for k in 1..corners.len() - 1 {
                    let tri = [&corners[0], &corners[k], &corners[k + 1]];
                    faces.push(tri.map(|c| c.v));
                    if has_uv {
                        face_uvs.push(tri.map(|c| tex[c.vt.unwrap() as usize]));
                    }
                }
            }
            // normals, groups, materials and smoothing carry nothing we need
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    let uvs = match faces_with_uv {
        0 => None,
        n if n == faces.len() => Some(face_uvs),
        n => {
            return Err(GeometryError::Parse {
                line: 0,
                reason: format!("{n} of {} faces carry texture indices", faces.len()),
            })
        }
    };
    Mesh::new(vertices, faces, uvs, instance)
}

/// Serializes a mesh as OBJ text. UVs, when present, are written one `vt`
/// per face corner.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    match mesh.face_uvs() {
        Some(uvs) => {
            for uv in uvs.iter().flatten() {
                let _ = writeln!(out, "vt {:?} {:?}", uv.x, 1.0 - uv.y);
            }
            for (fi, f) in mesh.faces().iter().enumerate() {
                let t = 3 * fi + 1;
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    t,
                    f[1] + 1,
                    t + 1,
                    f[2] + 1,
                    t + 2
                );
            }
        }
        None => {
            for f in mesh.faces() {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    out
}
