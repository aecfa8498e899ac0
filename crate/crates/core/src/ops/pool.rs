//! Max pooling over the time axis.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-window maximum with window = stride = `pool`; a trailing remainder
/// shorter than `pool` is dropped. Also returns the flat argmax positions
/// (earliest index on ties) for the backward pass.
pub fn maxpool1d_forward<S: Scalar>(
    input: &Tensor<S>,
    pool: usize,
) -> Result<(Tensor<S>, Vec<usize>)> {
    if input.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "maxpool1d expects [batch, channels, t], got {:?}",
            input.shape()
        )));
    }
    let (batch, channels, t) = (input.dim(0), input.dim(1), input.dim(2));
    if t < pool || pool < 1 {
        return Err(Error::Config(format!(
            "maxpool1d: time extent {} shorter than pool {}",
            t, pool
        )));
    }
    let t_out = t / pool;
    let mut out = Tensor::zeros(&[batch, channels, t_out]);
    let mut argmax = vec![0usize; batch * channels * t_out];
    for b in 0..batch {
        for c in 0..channels {
            let src = input.row3(b, c);
            for w in 0..t_out {
                let start = w * pool;
                let mut best = src[start];
                let mut best_i = start;
                for (i, &x) in src[start..start + pool].iter().enumerate().skip(1) {
                    if x > best {
                        best = x;
                        best_i = start + i;
                    }
                }
                out.set3(b, c, w, best);
                argmax[(b * channels + c) * t_out + w] = best_i;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient back to its argmax position.
pub fn maxpool1d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    argmax: &[usize],
    input_time: usize,
) -> Result<Tensor<S>> {
    let (batch, channels, t_out) = (grad_out.dim(0), grad_out.dim(1), grad_out.dim(2));
    if argmax.len() != batch * channels * t_out {
        return Err(Error::Shape(
            "maxpool1d_backward: argmax cache does not match cotangent".into(),
        ));
    }
    let mut grad_input = Tensor::zeros(&[batch, channels, input_time]);
    for b in 0..batch {
        for c in 0..channels {
            for w in 0..t_out {
                let src_t = argmax[(b * channels + c) * t_out + w];
                let g = grad_out.at3(b, c, w);
                let row = grad_input.row3_mut(b, c);
                row[src_t] = row[src_t] + g;
            }
        }
    }
    Ok(grad_input)
}
