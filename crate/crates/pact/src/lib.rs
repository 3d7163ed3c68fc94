//! File formats, run configuration, reports and the pipeline behind the
//! `pact` binary. The numerics live in `pact-core`.

pub mod config;
pub mod error;
pub mod format;
pub mod pipeline;
pub mod preview;
pub mod report;

pub use config::{Method, RunConfig};
pub use error::{FormatError, PactError, Result};
