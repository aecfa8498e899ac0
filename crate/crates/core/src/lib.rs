//! Significance-offset convolutional networks for asynchronous multivariate
//! time series, together with the synthetic data generators, baselines,
//! training protocol and evaluation tooling built around them.
//!
//! Everything numeric is generic over the [`scalar::Scalar`] element type;
//! the aliases below fix the default 64-bit instantiation used by the CLI
//! and the test suites.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod frame;
pub mod ingest;
pub mod init;
pub mod layers;
pub mod models;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod windows;

pub use error::{Error, Result};
pub use ops::Mode;
pub use scalar::Scalar;

/// Default scalar type: 64-bit floats throughout training and checking.
pub type F = f64;
pub type Tensor = tensor::Tensor<F>;
pub type Socnn = models::Socnn<F>;
pub type Cnn = models::Cnn<F>;
pub type VarModel = models::VarModel<F>;
pub type AnyModel = models::AnyModel<F>;
pub type SeriesFrame = frame::SeriesFrame<F>;
pub type WindowSet = windows::WindowSet<F>;
