//! Stateful layer wrappers around the ops: parameters, matching gradient
//! accumulators, and the forward caches consumed by the backward pass.
//!
//! The model graphs in this crate are fixed feed-forward stacks, so each
//! layer simply remembers what its last train-mode forward saw. Calling
//! `backward` consumes that cache.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::init::glorot_uniform;
use crate::ops::{self, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Visitor over (parameter, gradient accumulator) pairs in a fixed order.
pub type ParamVisitor<'a, S> = dyn FnMut(&mut Tensor<S>, &mut Tensor<S>) + 'a;
/// Visitor over all persistent tensors (parameters and running statistics).
pub type StateVisitor<'a, S> = dyn FnMut(&str, &mut Tensor<S>) + 'a;

fn missing_cache() -> Error {
    Error::Config("backward called without a cached train-mode forward".into())
}

#[derive(Clone)]
pub struct Conv1d<S> {
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
    pub grad_kernel: Tensor<S>,
    pub grad_bias: Tensor<S>,
    cache_input: Option<Tensor<S>>,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new(c_out: usize, c_in: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            kernel: glorot_uniform(&[c_out, c_in, k], rng),
            bias: Tensor::zeros(&[c_out]),
            grad_kernel: Tensor::zeros(&[c_out, c_in, k]),
            grad_bias: Tensor::zeros(&[c_out]),
            cache_input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let out = ops::conv1d_forward(input, &self.kernel, &self.bias)?;
        if mode == Mode::Train {
            self.cache_input = Some(input.clone());
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let input = self.cache_input.take().ok_or_else(missing_cache)?;
        let (gi, gk, gb) = ops::conv1d_backward(grad_out, &input, &self.kernel)?;
        accumulate(&mut self.grad_kernel, &gk);
        accumulate(&mut self.grad_bias, &gb);
        Ok(gi)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        f(&mut self.kernel, &mut self.grad_kernel);
        f(&mut self.bias, &mut self.grad_bias);
    }
}

#[derive(Clone)]
pub struct Dense<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub grad_weight: Tensor<S>,
    pub grad_bias: Tensor<S>,
    cache_input: Option<Tensor<S>>,
}

impl<S: Scalar> Dense<S> {
    pub fn new(n_out: usize, n_in: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: glorot_uniform(&[n_out, n_in], rng),
            bias: Tensor::zeros(&[n_out]),
            grad_weight: Tensor::zeros(&[n_out, n_in]),
            grad_bias: Tensor::zeros(&[n_out]),
            cache_input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let out = ops::dense_forward(input, &self.weight, &self.bias)?;
        if mode == Mode::Train {
            self.cache_input = Some(input.clone());
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let input = self.cache_input.take().ok_or_else(missing_cache)?;
        let (gi, gw, gb) = ops::dense_backward(grad_out, &input, &self.weight)?;
        accumulate(&mut self.grad_weight, &gw);
        accumulate(&mut self.grad_bias, &gb);
        Ok(gi)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }
}

#[derive(Clone)]
pub struct BatchNorm1d<S> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub grad_gamma: Tensor<S>,
    pub grad_beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub eps: S,
    pub momentum: S,
    cache: Option<ops::BnCache<S>>,
}

impl<S: Scalar> BatchNorm1d<S> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], S::one()),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], S::one()),
            eps: S::c(eps),
            momentum: S::c(momentum),
            cache: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let fwd = ops::batchnorm_forward(
            input,
            self.gamma.data(),
            self.beta.data(),
            self.running_mean.data(),
            self.running_var.data(),
            self.eps,
            self.momentum,
            mode,
        )?;
        if let Some((rm, rv)) = fwd.updated_running {
            self.running_mean.data_mut().copy_from_slice(&rm);
            self.running_var.data_mut().copy_from_slice(&rv);
        }
        if mode == Mode::Train {
            self.cache = Some(fwd.cache);
        }
        Ok(fwd.output)
    }

    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self.cache.take().ok_or_else(missing_cache)?;
        let (gi, gg, gb) = ops::batchnorm_backward(grad_out, &cache, self.gamma.data())?;
        for (a, b) in self.grad_gamma.data_mut().iter_mut().zip(&gg) {
            *a = *a + *b;
        }
        for (a, b) in self.grad_beta.data_mut().iter_mut().zip(&gb) {
            *a = *a + *b;
        }
        Ok(gi)
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        f(&mut self.gamma, &mut self.grad_gamma);
        f(&mut self.beta, &mut self.grad_beta);
    }
}

#[derive(Clone)]
pub struct LeakyRelu<S> {
    pub leak: S,
    cache_input: Option<Tensor<S>>,
}

impl<S: Scalar> LeakyRelu<S> {
    pub fn new(leak: f64) -> Self {
        Self {
            leak: S::c(leak),
            cache_input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let out = ops::leaky_relu_forward(input, self.leak)?;
        if mode == Mode::Train {
            self.cache_input = Some(input.clone());
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let input = self.cache_input.take().ok_or_else(missing_cache)?;
        ops::leaky_relu_backward(grad_out, &input, self.leak)
    }
}

#[derive(Clone)]
pub struct Dropout<S> {
    pub rate: f64,
    cache_mask: Option<Option<Tensor<S>>>,
}

impl<S: Scalar> Dropout<S> {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            cache_mask: None,
        }
    }

    pub fn forward(
        &mut self,
        input: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>> {
        let (out, mask) = ops::dropout_forward(input, self.rate, mode, rng)?;
        if mode == Mode::Train {
            self.cache_mask = Some(mask);
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let mask = self.cache_mask.take().ok_or_else(missing_cache)?;
        ops::dropout_backward(grad_out, mask.as_ref())
    }
}

#[derive(Clone)]
pub struct MaxPool1d {
    pub pool: usize,
    cache: Option<(Vec<usize>, usize)>,
}

impl MaxPool1d {
    pub fn new(pool: usize) -> Self {
        Self { pool, cache: None }
    }

    pub fn forward<S: Scalar>(&mut self, input: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let (out, argmax) = ops::maxpool1d_forward(input, self.pool)?;
        if mode == Mode::Train {
            self.cache = Some((argmax, input.dim(2)));
        }
        Ok(out)
    }

    pub fn backward<S: Scalar>(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let (argmax, t_in) = self.cache.take().ok_or_else(missing_cache)?;
        ops::maxpool1d_backward(grad_out, &argmax, t_in)
    }
}

/// conv -> optional batchnorm -> optional leaky ReLU (None = linear) ->
/// optional dropout. The building block of every network here.
#[derive(Clone)]
pub struct ConvBlock<S> {
    pub conv: Conv1d<S>,
    pub bn: Option<BatchNorm1d<S>>,
    pub act: Option<LeakyRelu<S>>,
    pub dropout: Option<Dropout<S>>,
}

impl<S: Scalar> ConvBlock<S> {
    pub fn forward(
        &mut self,
        input: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<S>> {
        let mut x = self.conv.forward(input, mode)?;
        if let Some(bn) = &mut self.bn {
            x = bn.forward(&x, mode)?;
        }
        if let Some(act) = &mut self.act {
            x = act.forward(&x, mode)?;
        }
        if let Some(drop) = &mut self.dropout {
            x = drop.forward(&x, mode, rng)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let mut g = grad_out.clone();
        if let Some(drop) = &mut self.dropout {
            g = drop.backward(&g)?;
        }
        if let Some(act) = &mut self.act {
            g = act.backward(&g)?;
        }
        if let Some(bn) = &mut self.bn {
            g = bn.backward(&g)?;
        }
        self.conv.backward(&g)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, S>) {
        self.conv.visit_params(f);
        if let Some(bn) = &mut self.bn {
            bn.visit_params(f);
        }
    }

    /// Parameters plus batch-norm running statistics, with stable names.
    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_, S>) {
        f(&format!("{prefix}.kernel"), &mut self.conv.kernel);
        f(&format!("{prefix}.bias"), &mut self.conv.bias);
        if let Some(bn) = &mut self.bn {
            f(&format!("{prefix}.bn.gamma"), &mut bn.gamma);
            f(&format!("{prefix}.bn.beta"), &mut bn.beta);
            f(&format!("{prefix}.bn.running_mean"), &mut bn.running_mean);
            f(&format!("{prefix}.bn.running_var"), &mut bn.running_var);
        }
    }

    pub fn num_params(&self) -> usize {
        let mut n = self.conv.kernel.len() + self.conv.bias.len();
        if let Some(bn) = &self.bn {
            n += bn.gamma.len() + bn.beta.len();
        }
        n
    }
}

impl<S: Scalar> Dense<S> {
    pub fn visit_state(&mut self, prefix: &str, f: &mut StateVisitor<'_, S>) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

fn accumulate<S: Scalar>(acc: &mut Tensor<S>, grad: &Tensor<S>) {
    for (a, &g) in acc.data_mut().iter_mut().zip(grad.data()) {
        *a = *a + g;
    }
}
