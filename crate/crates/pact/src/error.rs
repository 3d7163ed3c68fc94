use std::path::PathBuf;

use thiserror::Error;

/// Errors reading or writing the binary containers.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("truncated file: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")]
    Checksum { stored: u32, actual: u32 },

    #[error("{0} unexpected bytes after the checksum")]
    TrailingBytes(usize),

    #[error("inconsistent header: {0}")]
    Inconsistent(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("invalid contents: {0}")]
    Invalid(#[from] pact_core::Error),
}

#[derive(Debug, Error)]
pub enum PactError {
    #[error("{0}")]
    Usage(String),

    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Core(#[from] pact_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = PactError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

impl PactError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PactError::Io { path: path.into(), source }
    }

    /// Usage (1) for anything the user's config or flags got wrong, data (2)
    /// for unreadable or inconsistent inputs, numerical (3) for failed solves.
    pub fn exit_code(&self) -> i32 {
        use pact_core::Error as E;
        match self {
            PactError::Usage(_) | PactError::Config { .. } => exit::USAGE,
            PactError::Format(FormatError::Invalid(E::Numerical(_))) | PactError::Core(E::Numerical(_)) => {
                exit::NUMERICAL
            }
            PactError::Core(
                E::Config(_)
                | E::NotADivisor { .. }
                | E::Domain(_)
                | E::Geometry(_)
                | E::Phantom(_)
                | E::MemoryBudget { .. },
            ) => exit::USAGE,
            PactError::Core(_) | PactError::Format(_) | PactError::Io { .. } => exit::DATA,
        }
    }
}
