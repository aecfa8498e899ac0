//! Per-channel batch normalization over the (batch, time) axes.

use crate::error::{Error, Result};
use crate::ops::Mode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// State captured by the forward pass, consumed by [`batchnorm_backward`].
#[derive(Clone, Debug)]
pub struct BnCache<S> {
    /// Normalized inputs (before scale/shift).
    pub xhat: Tensor<S>,
    /// Per-channel 1/sqrt(var + eps) actually used by the pass.
    pub inv_std: Vec<S>,
    pub mode: Mode,
}

/// Forward result. `updated_running` holds the new running statistics in
/// train mode; the caller decides when to commit them, which keeps the op
/// itself free of mutation.
pub struct BnForward<S> {
    pub output: Tensor<S>,
    pub cache: BnCache<S>,
    pub updated_running: Option<(Vec<S>, Vec<S>)>,
}

/// Standardizes each channel over the (batch, time) axes with batch
/// statistics in train mode and running statistics in eval mode, then
/// applies the learned scale/shift. Running statistics follow an
/// exponential moving average with the given momentum.
pub fn batchnorm_forward<S: Scalar>(
    input: &Tensor<S>,
    gamma: &[S],
    beta: &[S],
    running_mean: &[S],
    running_var: &[S],
    eps: S,
    momentum: S,
    mode: Mode,
) -> Result<BnForward<S>> {
    if input.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "batchnorm expects [batch, channels, m], got {:?}",
            input.shape()
        )));
    }
    let (batch, channels, m) = (input.dim(0), input.dim(1), input.dim(2));
    if gamma.len() != channels || beta.len() != channels {
        return Err(Error::Shape(format!(
            "batchnorm scale/shift length {} vs {} channels",
            gamma.len(),
            channels
        )));
    }
    let n = batch * m;
    if mode == Mode::Train && n <= 1 {
        return Err(Error::Config(
            "batchnorm train mode needs batch * time > 1".into(),
        ));
    }

    let count = S::c(n as f64);
    let mut mean = vec![S::zero(); channels];
    let mut var = vec![S::zero(); channels];
    match mode {
        Mode::Train => {
            for c in 0..channels {
                let mut acc = S::zero();
                for b in 0..batch {
                    acc = acc + input.row3(b, c).iter().copied().sum();
                }
                mean[c] = acc / count;
                let mut acc2 = S::zero();
                for b in 0..batch {
                    for &x in input.row3(b, c) {
                        let d = x - mean[c];
                        acc2 = acc2 + d * d;
                    }
                }
                var[c] = acc2 / count;
            }
        }
        Mode::Eval => {
            mean.copy_from_slice(running_mean);
            var.copy_from_slice(running_var);
        }
    }

    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(input.shape());
    let mut output = Tensor::zeros(input.shape());
    for b in 0..batch {
        for c in 0..channels {
            let src = input.row3(b, c);
            let xh = xhat.row3_mut(b, c);
            for (d, &x) in xh.iter_mut().zip(src) {
                *d = (x - mean[c]) * inv_std[c];
            }
        }
    }
    for b in 0..batch {
        for c in 0..channels {
            let xh = xhat.row3(b, c).to_vec();
            let out = output.row3_mut(b, c);
            for (o, xh_v) in out.iter_mut().zip(xh) {
                *o = gamma[c] * xh_v + beta[c];
            }
        }
    }
    output.ensure_finite("batchnorm_forward")?;

    let updated_running = match mode {
        Mode::Train => {
            let one_minus = S::one() - momentum;
            let new_mean: Vec<S> = running_mean
                .iter()
                .zip(&mean)
                .map(|(&r, &b)| momentum * r + one_minus * b)
                .collect();
            let new_var: Vec<S> = running_var
                .iter()
                .zip(&var)
                .map(|(&r, &b)| momentum * r + one_minus * b)
                .collect();
            Some((new_mean, new_var))
        }
        Mode::Eval => None,
    };

    Ok(BnForward {
        output,
        cache: BnCache {
            xhat,
            inv_std,
            mode,
        },
        updated_running,
    })
}

/// Exact partials through the normalize-scale-shift graph. In train mode the
/// batch statistics are functions of the input; in eval mode the running
/// statistics are constants.
pub fn batchnorm_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    cache: &BnCache<S>,
    gamma: &[S],
) -> Result<(Tensor<S>, Vec<S>, Vec<S>)> {
    grad_out.same_shape(&cache.xhat, "batchnorm_backward")?;
    let (batch, channels, m) = (grad_out.dim(0), grad_out.dim(1), grad_out.dim(2));
    let n = S::c((batch * m) as f64);

    let mut grad_gamma = vec![S::zero(); channels];
    let mut grad_beta = vec![S::zero(); channels];
    for c in 0..channels {
        for b in 0..batch {
            let g = grad_out.row3(b, c);
            let xh = cache.xhat.row3(b, c);
            for (&gi, &xi) in g.iter().zip(xh) {
                grad_gamma[c] = grad_gamma[c] + gi * xi;
                grad_beta[c] = grad_beta[c] + gi;
            }
        }
    }

    let mut grad_input = Tensor::zeros(grad_out.shape());
    match cache.mode {
        Mode::Train => {
            // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
            for c in 0..channels {
                let mean_g = grad_beta[c] / n;
                let mean_gx = grad_gamma[c] / n;
                let scale = gamma[c] * cache.inv_std[c];
                for b in 0..batch {
                    let g = grad_out.row3(b, c);
                    let xh = cache.xhat.row3(b, c).to_vec();
                    let dst = grad_input.row3_mut(b, c);
                    for ((d, &gi), xi) in dst.iter_mut().zip(g).zip(xh) {
                        *d = scale * (gi - mean_g - xi * mean_gx);
                    }
                }
            }
        }
        Mode::Eval => {
            for c in 0..channels {
                let scale = gamma[c] * cache.inv_std[c];
                for b in 0..batch {
                    let g = grad_out.row3(b, c);
                    let dst = grad_input.row3_mut(b, c);
                    for (d, &gi) in dst.iter_mut().zip(g) {
                        *d = scale * gi;
                    }
                }
            }
        }
    }

    Ok((grad_input, grad_gamma, grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let input = Tensor::filled(&[2, 1, 3], 7.0);
        let out = batchnorm_forward(
            &input,
            &[1.0],
            &[0.0],
            &[0.0],
            &[1.0],
            1e-5,
            0.99,
            Mode::Train,
        )
        .unwrap();
        assert!(out.output.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_gamma_gives_constant_beta() {
        let input = Tensor::from_vec(&[1, 1, 4], vec![1.0, -2.0, 5.0, 0.0]).unwrap();
        let out = batchnorm_forward(
            &input,
            &[0.0],
            &[2.5],
            &[0.0],
            &[1.0],
            1e-5,
            0.99,
            Mode::Train,
        )
        .unwrap();
        assert!(out.output.data().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn running_stats_updated_only_in_train_mode() {
        let input = Tensor::<f64>::from_vec(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let train = batchnorm_forward(
            &input,
            &[1.0],
            &[0.0],
            &[0.0],
            &[1.0],
            1e-5,
            0.9,
            Mode::Train,
        )
        .unwrap();
        let (rm, rv) = train.updated_running.unwrap();
        assert!((rm[0] - 0.1 * 2.5).abs() < 1e-12);
        assert!((rv[0] - (0.9 + 0.1 * 1.25)).abs() < 1e-12);

        let eval = batchnorm_forward(
            &input,
            &[1.0],
            &[0.0],
            &[2.5],
            &[1.25],
            1e-5,
            0.9,
            Mode::Eval,
        )
        .unwrap();
        assert!(eval.updated_running.is_none());
        // eval uses the provided running stats
        let expect = (1.0 - 2.5) / (1.25f64 + 1e-5).sqrt();
        assert!((eval.output.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn train_mode_needs_more_than_one_element() {
        let input = Tensor::filled(&[1, 2, 1], 1.0);
        assert!(batchnorm_forward(
            &input,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            1e-5,
            0.99,
            Mode::Train
        )
        .is_err());
    }
}
