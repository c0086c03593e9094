//! Ground-truth data generator: a position-based cloth solver with body
//! collision pushout, a procedural garment sheet, a library of synthetic
//! motion clips, and the dataset writer with its penetration audit gate.

mod dataset;
mod garment;
mod motion;
mod solver;

pub use dataset::{
    audit_penetrations, generate_dataset, load_frame, load_sequence_params, save_frame,
    settle_template, simulate_sequence, DatasetManifest, SequenceEntry, SequenceParams,
};
pub use garment::{pin_position, pin_targets, skirt_sheet, GarmentSheet, PinAttachment};
pub use motion::{clip_by_name, make_sequence, standard_clips, ClipSpec, JointTrack, RootMotion};
pub use solver::{step, ClothState, PosedCollider, SimConfig};

use thiserror::Error;

pub type SimResult<T> = Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
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
    #[error("non-finite positions at frame {frame} (first bad vertex {vertex})")]
    NonFinite { frame: usize, vertex: usize },
    #[error("penetration audit failed at frame {frame}: {count} vertices inside the body")]
    AuditFailed { frame: usize, count: usize },
    #[error("unknown motion clip `{0}`")]
    UnknownClip(String),
    #[error("corrupt frame file {path}: {msg}")]
    Corrupt { path: String, msg: String },
}
