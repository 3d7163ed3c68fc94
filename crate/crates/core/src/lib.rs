//! Ring-array photoacoustic computed tomography (PACT) in two dimensions.
//!
//! The crate holds the numerical side of the pipeline and builds without `std`
//! (an allocator is required):
//!
//! - [`geometry`]: ring transducer layout, image raster and world coordinates.
//! - [`data`]: [`Image`](data::Image) and [`Sinogram`](data::Sinogram) containers.
//! - [`forward`]: matrix-free arc-integral forward operator, its adjoint and
//!   optional sparse assembly.
//! - [`ubp`]: universal back-projection.
//! - [`tv`] and [`mb`]: total variation and the model-based projected-gradient solver.
//! - [`inr`]: hash-encoded implicit neural representation trained through the
//!   forward operator.
//! - [`metrics`]: SSIM, PSNR, SNR, CNR.
//! - [`phantom`]: synthetic phantoms and simulated acquisition.
//!
//! File formats, configuration and the command-line front end live in the
//! companion `pact` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod inr;
pub mod mb;
pub mod metrics;
pub mod phantom;
pub mod tv;
pub mod ubp;

mod par;

pub use data::{Image, Sinogram};
pub use error::{Error, Result};
pub use forward::{ForwardConfig, ForwardOperator};
pub use geometry::{ImageGrid, RingGeometry, RoiCircle};
