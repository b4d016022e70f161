//! File formats: TFLO/TMAP fields, PNG images and masks, scene configs and
//! metrics inputs.

mod metrics_input;
mod png;
mod scene;
pub mod tflo;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::GeometryError;

pub use metrics_input::{parse_predictions, read_predictions, read_registry, RegistryEntry};
pub use png::{read_png_info, read_rgba, write_face_map, write_mask, write_rgba, PngInfo};
pub use scene::{parse_scene, parse_scene_str, RunOptions, SceneConfig};
pub use tflo::{read_tflo, write_tflo, FieldKind, Magic, RawField};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("bad magic {:?}", String::from_utf8_lossy(.0))]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: u64, got: u64 },
    #[error("trailing data: expected {expected} payload bytes, got {got}")]
    TrailingData { expected: u64, got: u64 },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("schema error at {0}")]
    SchemaError(String),
    #[error("{path}:{line}: {reason}")]
    Json {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::FileNotFound(path.to_path_buf())
        } else {
            IoError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub(crate) fn image(path: &Path, source: image::ImageError) -> Self {
        match source {
            image::ImageError::IoError(e) => IoError::io(path, e),
            other => IoError::Image {
                path: path.to_path_buf(),
                source: other,
            },
        }
    }

    /// True when the error stems from bad or missing input rather than a failure while running.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}
