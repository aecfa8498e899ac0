//! Leaky ReLU and row-wise softmax.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `x if x >= 0 else leak * x`, elementwise.
pub fn leaky_relu_forward<S: Scalar>(input: &Tensor<S>, leak: S) -> Result<Tensor<S>> {
    if leak < S::zero() || leak >= S::one() {
        return Err(Error::Config(format!("leak rate {} outside [0, 1)", leak)));
    }
    Ok(input.map(|x| if x >= S::zero() { x } else { leak * x }))
}

/// Derivative is 1 for x >= 0 (including exactly 0) and `leak` for x < 0.
pub fn leaky_relu_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    leak: S,
) -> Result<Tensor<S>> {
    grad_out.same_shape(input, "leaky_relu_backward")?;
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x < S::zero() {
            *g = *g * leak;
        }
    }
    Ok(grad)
}

/// Softmax along the last (time) axis, independently for each `[batch, row]`
/// pair, stabilized by max subtraction. Every output row sums to 1.
pub fn row_softmax_forward<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    if input.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "row_softmax expects [batch, rows, m], got {:?}",
            input.shape()
        )));
    }
    input.ensure_finite("row_softmax_forward input")?;
    let (batch, rows, m) = (input.dim(0), input.dim(1), input.dim(2));
    let mut out = Tensor::zeros(&[batch, rows, m]);
    for b in 0..batch {
        for r in 0..rows {
            let src = input.row3(b, r);
            let dst = out.row3_mut(b, r);
            let max = src.iter().copied().fold(src[0], S::max);
            let mut total = S::zero();
            for (d, &x) in dst.iter_mut().zip(src) {
                let e = (x - max).exp();
                *d = e;
                total = total + e;
            }
            for d in dst.iter_mut() {
                *d = *d / total;
            }
        }
    }
    Ok(out)
}

/// Backward through softmax given the forward `output`:
/// `grad_in = y * (grad_out - <grad_out, y>)` per row.
pub fn row_softmax_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    output: &Tensor<S>,
) -> Result<Tensor<S>> {
    grad_out.same_shape(output, "row_softmax_backward")?;
    let (batch, rows, _m) = (output.dim(0), output.dim(1), output.dim(2));
    let mut grad = Tensor::zeros(output.shape());
    for b in 0..batch {
        for r in 0..rows {
            let y = output.row3(b, r);
            let g = grad_out.row3(b, r);
            let dot: S = y.iter().zip(g).map(|(&yi, &gi)| yi * gi).sum();
            let dst = grad.row3_mut(b, r);
            for ((d, &yi), &gi) in dst.iter_mut().zip(y).zip(g) {
                *d = yi * (gi - dot);
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_matches_definition() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 2.5, 0.0]).unwrap();
        let y = leaky_relu_forward(&x, 0.1).unwrap();
        assert_eq!(y.data(), &[-0.1, 2.5, 0.0]);
    }

    #[test]
    fn leaky_relu_gradient_convention_at_zero() {
        let x = Tensor::from_vec(&[3], vec![-2.0, 0.0, 3.0]).unwrap();
        let g = Tensor::filled(&[3], 1.0);
        let gi = leaky_relu_backward(&g, &x, 0.1).unwrap();
        assert_eq!(gi.data(), &[0.1, 1.0, 1.0]);
    }

    #[test]
    fn leak_outside_unit_interval_rejected() {
        let x = Tensor::<f64>::zeros(&[1]);
        assert!(leaky_relu_forward(&x, 1.0).is_err());
        assert!(leaky_relu_forward(&x, -0.1).is_err());
    }

    #[test]
    fn softmax_uniform_row() {
        let x = Tensor::<f64>::filled(&[1, 1, 5], 3.0);
        let y = row_softmax_forward(&x).unwrap();
        for &v in y.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let x = Tensor::from_vec(&[1, 1, 2], vec![0.0, 3.0f64.ln()]).unwrap();
        let y = row_softmax_forward(&x).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-15);
        assert!((y.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_finite_input() {
        let x = Tensor::from_vec(&[1, 1, 2], vec![f64::NAN, 0.0]).unwrap();
        assert!(row_softmax_forward(&x).is_err());
    }
}
