//! Recurrent garment regressor: builds the 42-D motion descriptor from the
//! pose/global trajectories, and learns to predict 25-D latent codes from
//! body shape and motion with a GRU stack.

mod descriptor;
mod net;
mod pca;
mod train;

pub use descriptor::{build_motion_descriptor, descriptor_sequence, MotionDescriptor, MOTION_DESCRIPTOR_DIM};
pub use net::{regressor_loss, RegressorConfig, RegressorNet};
pub use pca::{fit_pose_descriptor, PoseDescriptorModel, POSE_DESCRIPTOR_DIM};
pub use train::{train_regressor, RegressorTrainConfig, RegressorTrainLog, SequenceSample};

use thiserror::Error;

pub type RegressorResult<T> = Result<T, RegressorError>;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error(transparent)]
    Nn(#[from] nn_core::NnError),
    #[error("pose corpus has {got} frames; at least {need} required")]
    CorpusTooSmall { need: usize, got: usize },
    #[error("pose corpus is rank-deficient: only {rank} significant directions, need {need}")]
    RankDeficient { rank: usize, need: usize },
    #[error("sequence too short: {got} frames, need at least 3 for accelerations")]
    SequenceTooShort { got: usize },
    #[error("prediction/target lengths differ: {pred} vs {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },
}
