//! Fully connected affine map.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `output[b, o] = bias[o] + sum_i weight[o, i] * input[b, i]`
pub fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    if input.shape().len() != 2 || weight.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "dense expects input [b, n_in], weight [n_out, n_in]; got {:?} {:?}",
            input.shape(),
            weight.shape()
        )));
    }
    let (batch, n_in) = (input.dim(0), input.dim(1));
    let (n_out, w_in) = (weight.dim(0), weight.dim(1));
    if w_in != n_in || bias.dim(0) != n_out {
        return Err(Error::Shape(format!(
            "dense: input width {}, weight {:?}, bias {:?}",
            n_in,
            weight.shape(),
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[batch, n_out]);
    for b in 0..batch {
        let in_row = input.row2(b);
        for o in 0..n_out {
            let w_row = weight.row2(o);
            let mut acc = bias.data()[o];
            for (&w, &x) in w_row.iter().zip(in_row) {
                acc = acc + w * x;
            }
            out.set2(b, o, acc);
        }
    }
    out.ensure_finite("dense_forward")?;
    Ok(out)
}

/// Exact partials of [`dense_forward`].
pub fn dense_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    weight: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (batch, n_in) = (input.dim(0), input.dim(1));
    let (n_out, _) = (weight.dim(0), weight.dim(1));
    if grad_out.shape() != [batch, n_out] {
        return Err(Error::Shape(format!(
            "dense_backward cotangent {:?} vs output [{}, {}]",
            grad_out.shape(),
            batch,
            n_out
        )));
    }
    let mut grad_input = Tensor::zeros(&[batch, n_in]);
    let mut grad_weight = Tensor::zeros(&[n_out, n_in]);
    let mut grad_bias = Tensor::zeros(&[n_out]);
    for b in 0..batch {
        let g_row = grad_out.row2(b);
        let in_row = input.row2(b);
        for o in 0..n_out {
            let g = g_row[o];
            grad_bias.data_mut()[o] = grad_bias.data_mut()[o] + g;
            let w_row = weight.row2(o).to_vec();
            let gw_row = &mut grad_weight.data_mut()[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                gw_row[i] = gw_row[i] + g * in_row[i];
            }
            let gi_row = &mut grad_input.data_mut()[b * n_in..(b + 1) * n_in];
            for i in 0..n_in {
                gi_row[i] = gi_row[i] + g * w_row[i];
            }
        }
    }
    Ok((grad_input, grad_weight, grad_bias))
}
