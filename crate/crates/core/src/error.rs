use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not square: {len} entries for dimension {dim}")]
    NotSquare { dim: usize, len: usize },
    #[error("matrix is singular (|det| = {det:e})")]
    Singular { det: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("corrupt network weights: {0}")]
    CorruptWeights(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
