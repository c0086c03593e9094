//! Canonical-space garment model: maps unposed/deshaped garment states to
//! world space through the diffused body fields, with skinning attributes
//! evaluated at the deformed canonical positions (not at a fixed template).

mod pose;
mod template;

pub use pose::{corrected_template, pose_garment, PoseContext, PosedEval, PosedOp};
pub use template::GarmentTemplate;

use thiserror::Error;

pub type GarmentResult<T> = Result<T, GarmentError>;

#[derive(Debug, Error)]
pub enum GarmentError {
    #[error(transparent)]
    Mesh(#[from] mesh_core::MeshError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("garment/body pairing mismatch: sidecar has body hash {expected:#x}, supplied model hashes to {got:#x}")]
    BodyHashMismatch { expected: u64, got: u64 },
    #[error("template violates clearance: {count} vertices below ε = {clearance} m (min SDF {min_sdf:.4} m)")]
    ClearanceViolated {
        count: usize,
        clearance: f64,
        min_sdf: f64,
    },
}
