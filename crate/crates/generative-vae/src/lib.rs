//! Generative latent space over canonical garment deformations: a VAE
//! trained with reconstruction, Laplacian, KL, and a self-supervised
//! collision loss that samples the latent prior and checks the decoded
//! garments against the constant canonical-body SDF. No posed-body
//! geometry and no body parameters ever enter these losses.

mod loss;
mod train;
mod vae;

pub use loss::{vae_loss, LossBreakdown, LossParams, LossPhase};
pub use train::{sample_latents, train_vae, EpochLog, TrainOutcome, VaeTrainConfig};
pub use vae::{GarmentVae, VaeConfig};

use thiserror::Error;

pub type VaeResult<T> = Result<T, VaeError>;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error(transparent)]
    Mesh(#[from] mesh_core::MeshError),
    #[error("garment has {got} vertices, the VAE was built for {expected}")]
    VertexCountMismatch { expected: usize, got: usize },
    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },
    #[error("dataset is empty")]
    EmptyDataset,
}
