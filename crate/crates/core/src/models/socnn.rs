//! Significance-offset convolutional network.
//!
//! The predictor combines, per output row and lag, three factors: a learned
//! lag weight, an adjusted regressor from the offset sub-network, and a
//! data-dependent normalized weight from the significance sub-network:
//!
//! `y[i] = sum_t mix[i, t] * (off(x_t) + anchor[i, t]) * sig[i, t]`
//!
//! where `sig` rows sum to 1 over the time axis. The offset stack uses only
//! length-1 kernels, so each lag's adjusted regressor depends on that lag
//! alone, while the significance stack sees the whole window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::glorot_uniform;
use crate::layers::{BatchNorm1d, Conv1d, ConvBlock, Dropout, LeakyRelu, ParamVisitor, StateVisitor};
use crate::models::{checkpoint, LossBundle, Model, BN_EPS, BN_MOMENTUM};
use crate::ops::{self, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Kernel-size pattern for the significance stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelPattern {
    /// Alternating sizes 3, 1, 3, 1, ... starting with 3.
    Alternating31,
    /// Size 3 everywhere.
    All3,
}

impl KernelPattern {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "3-1" | "3,1" | "(3,1)" => Ok(Self::Alternating31),
            "3" => Ok(Self::All3),
            other => Err(Error::Config(format!(
                "unknown kernel pattern {:?} (expected \"3\" or \"3-1\")",
                other
            ))),
        }
    }

    pub(crate) fn size_at(self, layer: usize) -> usize {
        match self {
            Self::Alternating31 => {
                if layer % 2 == 0 {
                    3
                } else {
                    1
                }
            }
            Self::All3 => 3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SocnnConfig {
    /// Input dimension d (channels of the window).
    pub input_dim: usize,
    /// Number of predicted coordinates d_I.
    pub output_dim: usize,
    /// Window length M.
    pub window: usize,
    /// Input channels holding the past values of the predicted coordinates;
    /// added to the offset-stack output per lag. `None` when the targets are
    /// not part of the input window, in which case the offset output stands
    /// alone as the per-lag regressor.
    pub anchor_cols: Option<Vec<usize>>,
    /// Convolution layers in the significance stack, including the final
    /// linear layer that emits `output_dim` channels.
    pub significance_depth: usize,
    pub significance_filters: usize,
    pub kernels: KernelPattern,
    /// Length-1-kernel layers in the offset stack, including its linear top.
    pub offset_depth: usize,
    /// Auxiliary loss weight.
    pub alpha: f64,
    pub dropout: f64,
    pub batchnorm: bool,
    pub leak: f64,
}

impl SocnnConfig {
    pub fn new(input_dim: usize, output_dim: usize, window: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            window,
            anchor_cols: None,
            significance_depth: 10,
            significance_filters: 8,
            kernels: KernelPattern::Alternating31,
            offset_depth: 1,
            alpha: 0.01,
            dropout: 0.0,
            batchnorm: true,
            leak: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.window == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if let Some(cols) = &self.anchor_cols {
            if cols.len() != self.output_dim {
                return Err(Error::Config(format!(
                    "{} anchor columns for {} outputs",
                    cols.len(),
                    self.output_dim
                )));
            }
            if cols.iter().any(|&c| c >= self.input_dim) {
                return Err(Error::Config("anchor column out of range".into()));
            }
        }
        if self.significance_depth == 0 || self.offset_depth == 0 {
            return Err(Error::Config("stack depths must be at least 1".into()));
        }
        if self.significance_filters == 0 {
            return Err(Error::Config("filter count must be positive".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.leak) {
            return Err(Error::Config("dropout and leak must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct WeightingCache<S> {
    sig: Tensor<S>,
    off_plus: Tensor<S>,
}

#[derive(Clone)]
pub struct Socnn<S> {
    pub config: SocnnConfig,
    significance: Vec<ConvBlock<S>>,
    offset: Vec<ConvBlock<S>>,
    /// Lag mixing weights, `[output_dim, window]`, aligned with the time
    /// axis of the input window.
    pub mix: Tensor<S>,
    pub grad_mix: Tensor<S>,
    cache: Option<WeightingCache<S>>,
    loss_cache: Option<(Tensor<S>, Tensor<S>)>,
}

fn hidden_block<S: Scalar>(
    c_out: usize,
    c_in: usize,
    k: usize,
    cfg: &SocnnConfig,
    rng: &mut ChaCha8Rng,
) -> ConvBlock<S> {
    ConvBlock {
        conv: Conv1d::new(c_out, c_in, k, rng),
        bn: cfg.batchnorm.then(|| BatchNorm1d::new(c_out, BN_EPS, BN_MOMENTUM)),
        act: Some(LeakyRelu::new(cfg.leak)),
        dropout: (cfg.dropout > 0.0).then(|| Dropout::new(cfg.dropout)),
    }
}

fn linear_block<S: Scalar>(
    c_out: usize,
    c_in: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> ConvBlock<S> {
    ConvBlock {
        conv: Conv1d::new(c_out, c_in, k, rng),
        bn: None,
        act: None,
        dropout: None,
    }
}

impl<S: Scalar> Socnn<S> {
    pub fn new(config: SocnnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.input_dim;
        let d_out = config.output_dim;
        let f = config.significance_filters;

        let mut significance = Vec::with_capacity(config.significance_depth);
        for layer in 0..config.significance_depth {
            let last = layer + 1 == config.significance_depth;
            let c_in = if layer == 0 { d } else { f };
            if last {
                significance.push(linear_block(d_out, c_in, 1, rng));
            } else {
                significance.push(hidden_block(f, c_in, config.kernels.size_at(layer), &config, rng));
            }
        }

        let mut offset = Vec::with_capacity(config.offset_depth);
        for layer in 0..config.offset_depth {
            let last = layer + 1 == config.offset_depth;
            let c_in = if layer == 0 { d } else { f };
            if last {
                offset.push(linear_block(d_out, c_in, 1, rng));
            } else {
                offset.push(hidden_block(f, c_in, 1, &config, rng));
            }
        }

        let mix = glorot_uniform(&[d_out, config.window], rng);
        let grad_mix = Tensor::zeros(&[d_out, config.window]);
        Ok(Self {
            config,
            significance,
            offset,
            mix,
            grad_mix,
            cache: None,
            loss_cache: None,
        })
    }

    fn check_window(&self, windows: &Tensor<S>) -> Result<()> {
        if windows.shape().len() != 3
            || windows.dim(1) != self.config.input_dim
            || windows.dim(2) != self.config.window
        {
            return Err(Error::Shape(format!(
                "window batch {:?} does not match configured [_, {}, {}]",
                windows.shape(),
                self.config.input_dim,
                self.config.window
            )));
        }
        Ok(())
    }

    /// Full forward pass: prediction, row-normalized significance
    /// activations, and the per-lag adjusted regressors.
    pub fn forward(
        &mut self,
        windows: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<SocnnOutput<S>> {
        self.check_window(windows)?;
        let batch = windows.dim(0);
        let (d_out, m) = (self.config.output_dim, self.config.window);

        let mut sig_raw = windows.clone();
        for block in &mut self.significance {
            sig_raw = block.forward(&sig_raw, mode, rng)?;
        }
        let sig = ops::row_softmax_forward(&sig_raw)?;
        check_rows_normalized(&sig)?;

        let mut off = windows.clone();
        for block in &mut self.offset {
            off = block.forward(&off, mode, rng)?;
        }
        let mut off_plus = off;
        if let Some(cols) = &self.config.anchor_cols {
            for b in 0..batch {
                for (i, &col) in cols.iter().enumerate() {
                    let anchor = windows.row3(b, col).to_vec();
                    let row = off_plus.row3_mut(b, i);
                    for (o, a) in row.iter_mut().zip(anchor) {
                        *o = *o + a;
                    }
                }
            }
        }

        let mut pred = Tensor::zeros(&[batch, d_out]);
        for b in 0..batch {
            for i in 0..d_out {
                let w = self.mix.row2(i);
                let s = sig.row3(b, i);
                let o = off_plus.row3(b, i);
                let mut acc = S::zero();
                for t in 0..m {
                    acc = acc + w[t] * o[t] * s[t];
                }
                pred.set2(b, i, acc);
            }
        }
        pred.ensure_finite("socnn_forward")?;

        if mode == Mode::Train {
            self.cache = Some(WeightingCache {
                sig: sig.clone(),
                off_plus: off_plus.clone(),
            });
        }
        Ok(SocnnOutput {
            prediction: pred,
            significance: sig,
            offsets: off_plus,
        })
    }

    /// Backward through the weighting stage and both sub-networks.
    /// `grad_offsets` carries any loss term applied directly to the per-lag
    /// regressors (the auxiliary loss).
    pub fn backward(
        &mut self,
        grad_pred: &Tensor<S>,
        grad_offsets: Option<&Tensor<S>>,
    ) -> Result<()> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::Config("socnn backward called without cached forward".into())
        })?;
        let (batch, d_out, m) = (cache.sig.dim(0), cache.sig.dim(1), cache.sig.dim(2));

        let mut g_sig = Tensor::zeros(&[batch, d_out, m]);
        let mut g_off = match grad_offsets {
            Some(g) => {
                g.same_shape(&cache.off_plus, "socnn grad_offsets")?;
                g.clone()
            }
            None => Tensor::zeros(&[batch, d_out, m]),
        };
        for b in 0..batch {
            for i in 0..d_out {
                let gp = grad_pred.at2(b, i);
                let w = self.mix.row2(i).to_vec();
                let s = cache.sig.row3(b, i).to_vec();
                let o = cache.off_plus.row3(b, i).to_vec();
                let gw = &mut self.grad_mix.data_mut()[i * m..(i + 1) * m];
                for t in 0..m {
                    gw[t] = gw[t] + gp * o[t] * s[t];
                }
                let gs = g_sig.row3_mut(b, i);
                for t in 0..m {
                    gs[t] = gp * w[t] * o[t];
                }
                let go = g_off.row3_mut(b, i);
                for t in 0..m {
                    go[t] = go[t] + gp * w[t] * s[t];
                }
            }
        }

        let mut g = ops::row_softmax_backward(&g_sig, &cache.sig)?;
        for block in self.significance.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        let mut g = g_off;
        for block in self.offset.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let mut n = self.mix.len();
        for b in self.significance.iter().chain(&self.offset) {
            n += b.num_params();
        }
        n
    }

    pub fn save(&mut self, path: &std::path::Path) -> Result<()> {
        let meta = checkpoint::CheckpointMeta {
            model: "socnn".into(),
            config: serde_json::to_value(&self.config)?,
        };
        let mut named: Vec<(String, Tensor<S>)> = Vec::new();
        self.visit_state(&mut |name, t| named.push((name.to_string(), t.clone())));
        checkpoint::write_checkpoint(path, &meta, &named)
    }

    /// Rebuilds the model from the config stored in the checkpoint.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (meta, tensors) = checkpoint::read_checkpoint::<S>(path)?;
        let config: SocnnConfig = serde_json::from_value(meta.config)?;
        Self::from_tensors(config, &tensors)
    }

    /// Like [`Socnn::load`] but validates the checkpoint against a caller-
    /// provided config instead of trusting the embedded one.
    pub fn load_with_config(path: &std::path::Path, config: SocnnConfig) -> Result<Self> {
        let (_, tensors) = checkpoint::read_checkpoint::<S>(path)?;
        Self::from_tensors(config, &tensors)
    }

    fn from_tensors(config: SocnnConfig, tensors: &[(String, Tensor<S>)]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(config, &mut rng)?;
        checkpoint::fill_from_tensors(&mut model, tensors)?;
        Ok(model)
    }
}

pub struct SocnnOutput<S> {
    pub prediction: Tensor<S>,
    /// Row-normalized significance activations `[batch, output_dim, window]`.
    pub significance: Tensor<S>,
    /// Per-lag adjusted regressors `off(x_t) + anchor` of the same shape.
    pub offsets: Tensor<S>,
}

fn check_rows_normalized<S: Scalar>(sig: &Tensor<S>) -> Result<()> {
    let m = sig.dim(2);
    let tol = S::c(100.0 * (m.max(8)) as f64) * S::epsilon();
    for b in 0..sig.dim(0) {
        for i in 0..sig.dim(1) {
            let total: S = sig.row3(b, i).iter().copied().sum();
            if (total - S::one()).abs() > tol {
                return Err(Error::NonFinite("significance row not normalized"));
            }
        }
    }
    Ok(())
}

/// Loss of one batch: `l2` on the prediction, the per-lag auxiliary term on
/// the adjusted regressors, and their weighted total.
pub fn socnn_loss<S: Scalar>(
    prediction: &Tensor<S>,
    offsets: &Tensor<S>,
    targets: &Tensor<S>,
    alpha: f64,
) -> Result<LossBundle<S>> {
    let l2 = ops::mse(prediction, targets)?;
    let (batch, d_out, m) = (offsets.dim(0), offsets.dim(1), offsets.dim(2));
    if targets.shape() != [batch, d_out] {
        return Err(Error::Shape(format!(
            "targets {:?} vs offsets {:?}",
            targets.shape(),
            offsets.shape()
        )));
    }
    let mut acc = S::zero();
    for b in 0..batch {
        for i in 0..d_out {
            let y = targets.at2(b, i);
            for &o in offsets.row3(b, i) {
                let d = o - y;
                acc = acc + d * d;
            }
        }
    }
    let aux = acc / S::c((batch * m) as f64);
    let total = l2 + S::c(alpha) * aux;
    if !total.is_finite() {
        return Err(Error::NonFinite("socnn_loss"));
    }
    Ok(LossBundle { l2, aux, total })
}

/// Gradients of the total loss with respect to the prediction and the
/// per-lag regressors.
fn socnn_loss_backward<S: Scalar>(
    prediction: &Tensor<S>,
    offsets: &Tensor<S>,
    targets: &Tensor<S>,
    alpha: f64,
) -> Result<(Tensor<S>, Option<Tensor<S>>)> {
    let grad_pred = ops::mse_backward(prediction, targets)?;
    if alpha == 0.0 {
        return Ok((grad_pred, None));
    }
    let (batch, d_out, m) = (offsets.dim(0), offsets.dim(1), offsets.dim(2));
    let scale = S::c(2.0 * alpha / (batch * m) as f64);
    let mut grad_off = Tensor::zeros(&[batch, d_out, m]);
    for b in 0..batch {
        for i in 0..d_out {
            let y = targets.at2(b, i);
            let src = offsets.row3(b, i).to_vec();
            let dst = grad_off.row3_mut(b, i);
            for (d, o) in dst.iter_mut().zip(src) {
                *d = scale * (o - y);
            }
        }
    }
    Ok((grad_pred, Some(grad_off)))
}

impl<S: Scalar> Model<S> for Socnn<S> {
    fn loss_forward(
        &mut self,
        windows: &Tensor<S>,
        targets: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossBundle<S>> {
        let out = self.forward(windows, mode, rng)?;
        let bundle = socnn_loss(&out.prediction, &out.offsets, targets, self.config.alpha)?;
        if mode == Mode::Train {
            self.loss_cache = Some((out.prediction, targets.clone()));
        }
        Ok(bundle)
    }

    fn loss_backward(&mut self) -> Result<()> {
        let (pred, targets) = self
            .loss_cache
            .take()
            .ok_or_else(|| Error::Config("loss_backward without loss_forward".into()))?;
        let off_plus = self
            .cache
            .as_ref()
            .map(|c| c.off_plus.clone())
            .ok_or_else(|| Error::Config("loss_backward without cached forward".into()))?;
        let (grad_pred, grad_off) =
            socnn_loss_backward(&pred, &off_plus, &targets, self.config.alpha)?;
        self.backward(&grad_pred, grad_off.as_ref())
    }

    fn predict(&mut self, windows: &Tensor<S>) -> Result<Tensor<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(windows, Mode::Eval, &mut rng)?.prediction)
    }

    fn zero_grads(&mut self) {
        self.visit_params(&mut |_, g| g.fill(S::zero()));
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        for block in &mut self.significance {
            block.visit_params(f);
        }
        for block in &mut self.offset {
            block.visit_params(f);
        }
        f(&mut self.mix, &mut self.grad_mix);
    }

    fn visit_state(&mut self, f: &mut StateVisitor<'_, S>) {
        for (i, block) in self.significance.iter_mut().enumerate() {
            block.visit_state(&format!("significance.{i}"), f);
        }
        for (i, block) in self.offset.iter_mut().enumerate() {
            block.visit_state(&format!("offset.{i}"), f);
        }
        f("mix", &mut self.mix);
    }
}
