//! Procedural parametric human body: template mesh, skeleton, painted
//! skinning weights, shape/pose blendshapes, and linear blend skinning.
//!
//! The template is generated by marching a capsule-union implicit field, so
//! it is watertight and single-component by construction. All downstream
//! machinery depends only on the template/blendshape/skinning interface,
//! not on how the template was sculpted.

mod builder;
mod implicit;
mod io;
mod model;
mod tetra;

pub use builder::{build_default_body, default_capsules, BodyBuildConfig};
pub use implicit::{capsule_distance, capsule_distance_with_gradient, smooth_union, CapsuleField};
pub use model::{SHAPE_DIM, 
    pose_feature_dim, pose_features, skin_points, BodyModel, BodyParams, GlobalTransform,
    JointTransforms,
};
pub use tetra::marching_tetrahedra;

use thiserror::Error;

pub type BodyResult<T> = Result<T, BodyError>;

#[derive(Debug, Error)]
pub enum BodyError {
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
    #[error("corrupt body blob {path}: {msg}")]
    Corrupt { path: String, msg: String },
    #[error("model invariant violated: {0}")]
    Invariant(String),
}
