//! Squared-error loss: sum over output coordinates, mean over the batch.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean over the batch of squared Euclidean norms of `pred - target`.
pub fn mse<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<S> {
    pred.same_shape(target, "mse")?;
    if pred.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "mse expects [batch, d], got {:?}",
            pred.shape()
        )));
    }
    let batch = S::c(pred.dim(0) as f64);
    let mut acc = S::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        acc = acc + d * d;
    }
    let v = acc / batch;
    if !v.is_finite() {
        return Err(Error::NonFinite("mse"));
    }
    Ok(v)
}

/// `d mse / d pred = 2 (pred - target) / batch`
pub fn mse_backward<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<Tensor<S>> {
    pred.same_shape(target, "mse_backward")?;
    let scale = S::c(2.0) / S::c(pred.dim(0) as f64);
    let mut grad = pred.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        *g = scale * (*g - t);
    }
    Ok(grad)
}
