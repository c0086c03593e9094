//! End-to-end pipeline orchestration: data generation, field/SDF training,
//! canonical projection, generative training, regression, evaluation, and
//! the ablation harness. The binary front-end lives in `main.rs`; the
//! stages are a library so integration suites can drive them directly.

pub mod ablate;
pub mod collision;
pub mod config;
pub mod stages;

pub use config::RunConfig;
