use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("{n_proj} projections do not evenly divide {n_detectors} detectors")]
    NotADivisor { n_proj: usize, n_detectors: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("assembled matrix needs ~{needed} bytes, over the {limit}-byte budget; use the matrix-free operator")]
    MemoryBudget { needed: usize, limit: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid phantom: {0}")]
    Phantom(String),
}
