//! Implicit neural representation reconstruction.
//!
//! The image is a coordinate network (hash encoding + small MLP with sigmoid
//! output) fitted so that the forward model applied to it reproduces the
//! measured RF data. The forward model is evaluated directly on the network:
//! arc points are queried as continuous coordinates, not read from a raster.

pub mod adam;
pub mod hash;
pub mod mlp;
pub mod model;
pub mod real;
pub mod signal;
pub mod train;

pub use adam::{step_decay, Adam, AdamConfig};
pub use hash::{HashEncoding, HashEncodingConfig};
pub use mlp::MlpConfig;
pub use model::{eval_all, render_image, ConstantField, Field, InrModel, ModelConfig, ScalarField};
pub use real::Real;
pub use signal::{predicted_signal, ArcSampler, BatchItem};
pub use train::{
    batch_loss, gradient_check, inr_reconstruct, inr_train, inr_train_with, train_field, EpochRecord, GradCheck,
    InrConfig, InrOutput, InrProblem, InrTrainConfig, StepLoss,
};
