//! Model assemblies: the significance-offset network, a plain convolutional
//! baseline, and a closed-form vector-autoregression baseline.

mod checkpoint;
mod cnn;
mod socnn;
mod var;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointMeta};
pub use cnn::{Cnn, CnnConfig};
pub use socnn::{socnn_loss, KernelPattern, Socnn, SocnnConfig, SocnnOutput};
pub use var::VarModel;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layers::{ParamVisitor, StateVisitor};
use crate::ops::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch-norm epsilon used by every model in the crate.
pub const BN_EPS: f64 = 1e-5;
/// Exponential moving-average momentum for batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.99;

/// Loss components of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LossBundle<S> {
    /// Squared-error loss of the final prediction.
    pub l2: S,
    /// Mean squared error of the per-lag intermediate predictions.
    pub aux: S,
    /// `l2 + alpha * aux`.
    pub total: S,
}

/// Anything the training loop can optimize.
pub trait Model<S: Scalar> {
    /// Forward pass plus loss; train mode caches activations for
    /// [`Model::loss_backward`].
    fn loss_forward(
        &mut self,
        windows: &Tensor<S>,
        targets: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossBundle<S>>;

    /// Accumulates parameter gradients of the total loss from the last
    /// train-mode [`Model::loss_forward`].
    fn loss_backward(&mut self) -> Result<()>;

    /// Eval-mode prediction.
    fn predict(&mut self, windows: &Tensor<S>) -> Result<Tensor<S>>;

    fn zero_grads(&mut self);

    /// Visits (parameter, gradient) pairs in a fixed order.
    fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>);

    /// Visits every persistent tensor (parameters and running statistics)
    /// with a stable name; the basis for snapshots and checkpoints.
    fn visit_state(&mut self, f: &mut StateVisitor<'_, S>);
}

/// Copies every persistent tensor out of the model.
pub fn snapshot<S: Scalar>(model: &mut dyn Model<S>) -> Vec<Tensor<S>> {
    let mut out = Vec::new();
    model.visit_state(&mut |_, t| out.push(t.clone()));
    out
}

/// Restores a snapshot taken from the same model structure.
pub fn restore<S: Scalar>(model: &mut dyn Model<S>, snap: &[Tensor<S>]) {
    let mut i = 0;
    model.visit_state(&mut |_, t| {
        *t = snap[i].clone();
        i += 1;
    });
    assert_eq!(i, snap.len(), "snapshot does not match model structure");
}

/// Total number of trainable parameters.
pub fn num_params<S: Scalar>(model: &mut dyn Model<S>) -> usize {
    let mut n = 0;
    model.visit_params(&mut |p, _| n += p.len());
    n
}

/// Dispatch wrapper for the three model families, used by evaluation code
/// and the CLI where the concrete kind is decided at runtime.
pub enum AnyModel<S> {
    Socnn(Socnn<S>),
    Cnn(Cnn<S>),
    Var(VarModel<S>),
}

impl<S: Scalar> AnyModel<S> {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Socnn(_) => "socnn",
            AnyModel::Cnn(_) => "cnn",
            AnyModel::Var(_) => "var",
        }
    }

    pub fn predict(&mut self, windows: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            AnyModel::Socnn(m) => m.predict(windows),
            AnyModel::Cnn(m) => m.predict(windows),
            AnyModel::Var(m) => m.predict(windows),
        }
    }

    pub fn as_socnn_mut(&mut self) -> Option<&mut Socnn<S>> {
        match self {
            AnyModel::Socnn(m) => Some(m),
            _ => None,
        }
    }

    pub fn save(&mut self, path: &std::path::Path) -> Result<()> {
        match self {
            AnyModel::Socnn(m) => m.save(path),
            AnyModel::Cnn(m) => m.save(path),
            AnyModel::Var(m) => m.save(path),
        }
    }

    /// Loads any checkpoint written by [`AnyModel::save`], rebuilding the
    /// model from the config embedded in the header.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let meta = checkpoint::peek_meta(path)?;
        match meta.model.as_str() {
            "socnn" => Ok(AnyModel::Socnn(Socnn::load(path)?)),
            "cnn" => Ok(AnyModel::Cnn(Cnn::load(path)?)),
            "var" => Ok(AnyModel::Var(VarModel::load(path)?)),
            other => Err(crate::error::Error::Checkpoint(format!(
                "unknown model kind {:?}",
                other
            ))),
        }
    }
}
