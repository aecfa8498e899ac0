//! Inverted dropout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Train mode: zero each element independently with probability `rate` and
/// scale survivors by 1/(1-rate). Eval mode (or rate 0): identity, no RNG
/// draws. The returned mask holds the factor applied per element.
pub fn dropout_forward<S: Scalar>(
    input: &Tensor<S>,
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Tensor<S>, Option<Tensor<S>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {} outside [0, 1)", rate)));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep_scale = S::c(1.0 / (1.0 - rate));
    let mut mask = Tensor::zeros(input.shape());
    let mut out = input.clone();
    for (m, o) in mask.data_mut().iter_mut().zip(out.data_mut()) {
        if rng.gen::<f64>() < rate {
            *m = S::zero();
            *o = S::zero();
        } else {
            *m = keep_scale;
            *o = *o * keep_scale;
        }
    }
    Ok((out, Some(mask)))
}

/// Reuses the forward mask; `None` means the forward pass was an identity.
pub fn dropout_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    mask: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) => {
            grad_out.same_shape(m, "dropout_backward")?;
            let mut grad = grad_out.clone();
            for (g, &f) in grad.data_mut().iter_mut().zip(m.data()) {
                *g = *g * f;
            }
            Ok(grad)
        }
    }
}
