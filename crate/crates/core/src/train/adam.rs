//! Adam optimizer state and global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::models::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor, in visit order.
pub struct AdamState<S> {
    config: AdamConfig,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(model: &mut dyn Model<S>, config: AdamConfig) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |p, _| m.push(Tensor::zeros(p.shape())));
        let v = m.clone();
        Self {
            config,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over every parameter. Errors on non-finite
    /// gradients before touching any parameter state.
    pub fn step(&mut self, model: &mut dyn Model<S>, lr: f64) -> Result<()> {
        let mut finite = true;
        model.visit_params(&mut |_, g| {
            finite &= g.data().iter().all(|x| x.is_finite());
        });
        if !finite {
            return Err(Error::NonFinite("gradients before adam step"));
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = S::c(self.config.beta1);
        let b2 = S::c(self.config.beta2);
        let one_minus_b1 = S::one() - b1;
        let one_minus_b2 = S::one() - b2;
        let bias1 = S::c(1.0 - self.config.beta1.powi(t));
        let bias2 = S::c(1.0 - self.config.beta2.powi(t));
        let eps = S::c(self.config.eps);
        let lr = S::c(lr);

        let mut i = 0;
        model.visit_params(&mut |p, g| {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + one_minus_b1 * gv;
                *vv = b2 * *vv + one_minus_b2 * gv * gv;
                let m_hat = *mv / bias1;
                let v_hat = *vv / bias2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
            i += 1;
        });
        Ok(())
    }
}

/// Global L2 norm over a set of gradient tensors, accumulated in f64.
pub fn global_norm<S: Scalar>(grads: &[&Tensor<S>]) -> f64 {
    let mut acc = 0.0f64;
    for g in grads {
        for &x in g.data() {
            let v = x.f64();
            acc += v * v;
        }
    }
    acc.sqrt()
}

/// Scales all gradients by `threshold / norm` when the global L2 norm
/// exceeds the threshold; otherwise leaves them bit-identical. Returns the
/// pre-clip norm.
pub fn clip_gradients<S: Scalar>(grads: &mut [&mut Tensor<S>], threshold: f64) -> f64 {
    let norm = {
        let views: Vec<&Tensor<S>> = grads.iter().map(|g| &**g).collect();
        global_norm(&views)
    };
    if norm > threshold && norm.is_finite() {
        let scale = S::c(threshold / norm);
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x = *x * scale;
            }
        }
    }
    norm
}

/// [`clip_gradients`] over a model's gradient accumulators. Returns
/// `(pre_clip_norm, post_clip_norm)`.
pub fn clip_model_gradients<S: Scalar>(
    model: &mut dyn Model<S>,
    threshold: Option<f64>,
) -> (f64, f64) {
    let mut sq = 0.0f64;
    model.visit_params(&mut |_, g| {
        for &x in g.data() {
            let v = x.f64();
            sq += v * v;
        }
    });
    let norm = sq.sqrt();
    match threshold {
        Some(th) if norm > th && norm.is_finite() => {
            let scale = S::c(th / norm);
            model.visit_params(&mut |_, g| {
                for x in g.data_mut() {
                    *x = *x * scale;
                }
            });
            (norm, th)
        }
        _ => (norm, norm),
    }
}
