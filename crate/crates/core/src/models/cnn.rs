//! Plain convolutional baseline: a stack of same-padding conv blocks with
//! max pooling inserted after every second convolution, flattened into a
//! single linear layer on top.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    BatchNorm1d, Conv1d, ConvBlock, Dense, Dropout, LeakyRelu, MaxPool1d, ParamVisitor,
    StateVisitor,
};
use crate::models::{checkpoint, KernelPattern, LossBundle, Model, BN_EPS, BN_MOMENTUM};
use crate::ops::{self, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub window: usize,
    /// Number of convolutional layers; a pool of size 2 follows every
    /// second one.
    pub conv_layers: usize,
    pub filters: usize,
    pub kernels: KernelPattern,
    pub dropout: f64,
    pub batchnorm: bool,
    pub leak: f64,
}

impl CnnConfig {
    pub fn new(input_dim: usize, output_dim: usize, window: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            window,
            conv_layers: 7,
            filters: 16,
            kernels: KernelPattern::Alternating31,
            dropout: 0.0,
            batchnorm: true,
            leak: 0.1,
        }
    }

    fn pool_count(&self) -> usize {
        self.conv_layers / 2
    }

    /// Time extent after all poolings, or an error when some pooling stage
    /// would see fewer than 2 steps.
    pub fn pooled_window(&self) -> Result<usize> {
        let mut t = self.window;
        for _ in 0..self.pool_count() {
            if t < 2 {
                return Err(Error::Config(format!(
                    "window {} too short for {} poolings",
                    self.window,
                    self.pool_count()
                )));
            }
            t /= 2;
        }
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.window == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.conv_layers == 0 || self.filters == 0 {
            return Err(Error::Config("layer and filter counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.leak) {
            return Err(Error::Config("dropout and leak must lie in [0, 1)".into()));
        }
        self.pooled_window().map(|_| ())
    }
}

#[derive(Clone)]
enum Stage<S> {
    Conv(ConvBlock<S>),
    Pool(MaxPool1d),
}

#[derive(Clone)]
pub struct Cnn<S> {
    pub config: CnnConfig,
    stages: Vec<Stage<S>>,
    top: Dense<S>,
    flat_shape: (usize, usize),
    loss_cache: Option<(Tensor<S>, Tensor<S>)>,
    batch_cache: Option<usize>,
}

impl<S: Scalar> Cnn<S> {
    pub fn new(config: CnnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::new();
        let mut c_in = config.input_dim;
        for layer in 0..config.conv_layers {
            let k = config.kernels.size_at(layer);
            stages.push(Stage::Conv(ConvBlock {
                conv: Conv1d::new(config.filters, c_in, k, rng),
                bn: config
                    .batchnorm
                    .then(|| BatchNorm1d::new(config.filters, BN_EPS, BN_MOMENTUM)),
                act: Some(LeakyRelu::new(config.leak)),
                dropout: (config.dropout > 0.0).then(|| Dropout::new(config.dropout)),
            }));
            c_in = config.filters;
            if (layer + 1) % 2 == 0 && layer + 1 < config.conv_layers {
                stages.push(Stage::Pool(MaxPool1d::new(2)));
            }
        }
        let t_out = config.pooled_window()?;
        let flat = config.filters * t_out;
        let top = Dense::new(config.output_dim, flat, rng);
        Ok(Self {
            config,
            stages,
            top,
            flat_shape: (0, 0),
            loss_cache: None,
            batch_cache: None,
        })
    }

    pub fn forward(
        &mut self,
        windows: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>> {
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
        let mut x = windows.clone();
        for stage in &mut self.stages {
            x = match stage {
                Stage::Conv(block) => block.forward(&x, mode, rng)?,
                Stage::Pool(pool) => pool.forward(&x, mode)?,
            };
        }
        let (batch, c, t) = (x.dim(0), x.dim(1), x.dim(2));
        self.flat_shape = (c, t);
        self.batch_cache = Some(batch);
        let flat = x.reshaped(&[batch, c * t])?;
        self.top.forward(&flat, mode)
    }

    pub fn num_params(&self) -> usize {
        let mut n = self.top.weight.len() + self.top.bias.len();
        for stage in &self.stages {
            if let Stage::Conv(block) = stage {
                n += block.num_params();
            }
        }
        n
    }

    pub fn save(&mut self, path: &std::path::Path) -> Result<()> {
        let meta = checkpoint::CheckpointMeta {
            model: "cnn".into(),
            config: serde_json::to_value(&self.config)?,
        };
        let mut named: Vec<(String, Tensor<S>)> = Vec::new();
        self.visit_state(&mut |name, t| named.push((name.to_string(), t.clone())));
        checkpoint::write_checkpoint(path, &meta, &named)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (meta, tensors) = checkpoint::read_checkpoint::<S>(path)?;
        let config: CnnConfig = serde_json::from_value(meta.config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(config, &mut rng)?;
        checkpoint::fill_from_tensors(&mut model, &tensors)?;
        Ok(model)
    }
}

impl<S: Scalar> Model<S> for Cnn<S> {
    fn loss_forward(
        &mut self,
        windows: &Tensor<S>,
        targets: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossBundle<S>> {
        let pred = self.forward(windows, mode, rng)?;
        let l2 = ops::mse(&pred, targets)?;
        if mode == Mode::Train {
            self.loss_cache = Some((pred, targets.clone()));
        }
        Ok(LossBundle {
            l2,
            aux: S::zero(),
            total: l2,
        })
    }

    fn loss_backward(&mut self) -> Result<()> {
        let (pred, targets) = self
            .loss_cache
            .take()
            .ok_or_else(|| Error::Config("loss_backward without loss_forward".into()))?;
        let grad_pred = ops::mse_backward(&pred, &targets)?;
        let mut g = self.top.backward(&grad_pred)?;
        let batch = self.batch_cache.take().unwrap_or(pred.dim(0));
        let (c, t) = self.flat_shape;
        g = g.reshaped(&[batch, c, t])?;
        for stage in self.stages.iter_mut().rev() {
            g = match stage {
                Stage::Conv(block) => block.backward(&g)?,
                Stage::Pool(pool) => pool.backward(&g)?,
            };
        }
        Ok(())
    }

    fn predict(&mut self, windows: &Tensor<S>) -> Result<Tensor<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(windows, Mode::Eval, &mut rng)
    }

    fn zero_grads(&mut self) {
        self.visit_params(&mut |_, g| g.fill(S::zero()));
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        for stage in &mut self.stages {
            if let Stage::Conv(block) = stage {
                block.visit_params(f);
            }
        }
        self.top.visit_params(f);
    }

    fn visit_state(&mut self, f: &mut StateVisitor<'_, S>) {
        let mut conv_idx = 0;
        for stage in &mut self.stages {
            if let Stage::Conv(block) = stage {
                block.visit_state(&format!("conv.{conv_idx}"), f);
                conv_idx += 1;
            }
        }
        self.top.visit_state("top", f);
    }
}
