use thiserror::Error;

pub type MeshResult<T> = Result<T, MeshError>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("face {face} references vertex {index} but mesh has {nverts} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        nverts: usize,
    },
    #[error("face {face} is degenerate: indices [{a}, {b}, {c}] are not distinct")]
    DegenerateFace { face: usize, a: usize, b: usize, c: usize },
    #[error("mesh has {count} connected components, expected 1")]
    Disconnected { count: usize },
    #[error("triangle {tri} has a degenerate rest frame (det {det:.3e})")]
    DegenerateRestFrame { tri: usize, det: f64 },
    #[error("size mismatch: expected {expected} {what}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mesh is not watertight; {count} open/non-manifold edges, first: {first:?}")]
    NotWatertight { count: usize, first: Vec<(usize, usize)> },
}
