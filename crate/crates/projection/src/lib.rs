//! Optimization-based projection of posed garment frames into the
//! canonical space: minimize reconstruction, strain, and collision energies
//! over the canonical positions, warm-starting each frame from the last.

mod energy;
mod io;
pub mod solve;

pub use energy::{energy_collision, energy_rec, energy_strain, EnergyBreakdown, EnergyModel};
pub use io::{load_canonical_frames, save_canonical_frames, CanonicalManifest};
pub use solve::{
    project_frame, project_sequence, FrameTarget, ProjectionConfig, ProjectionResult,
    SequenceReport,
};

use thiserror::Error;

pub type ProjectionErrorResult<T> = Result<T, ProjectionError>;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error(transparent)]
    Mesh(#[from] mesh_core::MeshError),
    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<ProjectionError>,
    },
    #[error("target has {got} vertices but the template has {expected}")]
    CorrespondenceMismatch { expected: usize, got: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("corrupt canonical archive {path}: {msg}")]
    Corrupt { path: String, msg: String },
}
