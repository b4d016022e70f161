//! Occlusion-aware texture transfer between two poses of a hand-object scene.
//!
//! A source image of a hand holding an object is lifted into a
//! pose-independent atlas (the unified surface space), re-rendered under a
//! target pose, and fused with an inpainted background. Everything is
//! analytic: meshes, camera intrinsics and a source image go in, flow
//! fields, masks, a topology map and images come out.
//!
//! ```no_run
//! use topoflow::{pipeline, synth, RunOptions};
//!
//! let demo = synth::demo_scene();
//! let out = pipeline::run(
//!     &demo.source,
//!     &demo.target,
//!     &demo.source_image,
//!     Some(&demo.object_texture),
//!     &RunOptions::default(),
//! )
//! .unwrap();
//! println!("valid target flow: {:.1}%", 100.0 * out.flow_ts.valid_fraction());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compose;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod synth;

use thiserror::Error;

pub use image;
pub use nalgebra;

pub use compose::{ComposeError, LayerSet};
pub use flow::{FlowError, FlowField, TopologyMap, UnifiedTexture, VisibilityMask};
pub use geometry::{
    Camera, GeometryError, Instance, Mesh, RigidTransform, Scene, SceneObject, UnifiedSpace,
};
pub use grid::{Grid, Mask};
pub use image::RgbaImage;
pub use io::{IoError, RunOptions, SceneConfig};
pub use metrics::MetricsError;
pub use pipeline::{PipelineOutput, RunManifest};
pub use raster::{Label, RasterBuffers, RasterError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True when the failure is caused by the inputs (exit code 2) rather
    /// than by the tool or the environment (exit code 1).
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Geometry(_) | Error::Metrics(_) | Error::InvalidInput(_) => true,
            Error::Io(e) => e.is_input_error(),
            Error::Flow(e) => matches!(
                e,
                FlowError::MissingObjectTexture | FlowError::MissingUvs(_)
            ),
            Error::Compose(e) => {
                matches!(e, ComposeError::AllForeground | ComposeError::NoVisibleHand)
            }
            Error::Raster(_) | Error::Internal(_) => false,
            Error::Stage { source, .. } => source.is_input_error(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
