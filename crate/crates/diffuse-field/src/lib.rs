//! Diffused body fields: extends body-surface attributes (skinning weights
//! and blendshape bases) to arbitrary 3D points by smoothed closest-point
//! averaging, fits fast differentiable network approximations of those
//! fields, and precomputes the canonical-body signed distance field every
//! collision term queries.

mod closest;
mod diffusion;
mod fieldnet;
pub mod sdf;
mod shell;

pub use closest::{ClosestPointIndex, SurfaceAttributes};
pub use diffusion::{diffuse_attributes, DiffusionConfig, OracleField};
pub use fieldnet::{
    train_field_net, DiffusedBody, FieldEval, FieldNet, FieldNetConfig, FieldTrainConfig,
    FieldTrainReport, FoldedHeads,
};
pub use sdf::{
    build_sdf_grid, fit_sdf_net, SdfField, SdfGrid, SdfMode, SdfNet, SdfNetConfig, SdfQuery,
    SdfTrainReport,
};
pub use shell::ShellSampler;

use thiserror::Error;

pub type FieldResult<T> = Result<T, FieldError>;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Mesh(#[from] mesh_core::MeshError),
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },
    #[error("corrupt artifact {path}: {msg}")]
    Corrupt { path: String, msg: String },
}
