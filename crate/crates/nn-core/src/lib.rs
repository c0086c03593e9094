//! Minimal dense-network substrate: batched matrix kernels, dense /
//! layer-norm / GRU layers with exact reverse-mode gradients, an
//! adaptive-moment optimizer, named-parameter checkpoints, and the
//! finite-difference audit harness used across the workspace.
//!
//! Everything is f64 and deterministic given a seed: batches accumulate
//! gradients in a single fixed order.

pub mod adam;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod mat;
pub mod mlp;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use gru::{GruCell, GruStepCache};
pub use layers::{l1_sign, sigmoid, softmax_backward, softmax_rows, softplus, Activation, Dense, LayerNorm};
pub use mat::Mat;
pub use mlp::{Mlp, MlpCache, MlpConfig};
pub use params::{
    accumulate_grads_from, fnv_hash, param_count, zero_grads, Fnv, ParamEntry, ParamStore,
    ParamVisitor, Parameterized,
};

use thiserror::Error;

pub type NnResult<T> = Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint {path}: {msg}")]
    Corrupt { path: String, msg: String },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} shape mismatch: net expects {expected:?}, checkpoint has {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("training diverged: {0}")]
    Diverged(String),
}
