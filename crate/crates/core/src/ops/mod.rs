//! Differentiable layer primitives: explicit forward and backward passes.
//!
//! Every op is a pure function of (inputs, params, mode, rng). Backward
//! passes return exact partial derivatives of the forward map; the test
//! suite checks each one against central finite differences.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod loss;
mod pool;

pub use activation::{leaky_relu_backward, leaky_relu_forward, row_softmax_backward, row_softmax_forward};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BnCache, BnForward};
pub use conv::{conv1d_backward, conv1d_forward};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout_backward, dropout_forward};
pub use loss::{mse, mse_backward};
pub use pool::{maxpool1d_backward, maxpool1d_forward};

/// Whether a pass runs with training-time behaviour (batch statistics,
/// dropout sampling) or frozen inference behaviour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
