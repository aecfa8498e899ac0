//! 1-D convolution over the time axis, stride 1, "same" zero padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_shapes<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<(usize, usize, usize, usize, usize)> {
    if input.shape().len() != 3 || kernel.shape().len() != 3 || bias.shape().len() != 1 {
        return Err(Error::Shape(format!(
            "conv1d expects input [b, c_in, m], kernel [c_out, c_in, k], bias [c_out]; got {:?} {:?} {:?}",
            input.shape(),
            kernel.shape(),
            bias.shape()
        )));
    }
    let (batch, c_in, m) = (input.dim(0), input.dim(1), input.dim(2));
    let (c_out, kc_in, k) = (kernel.dim(0), kernel.dim(1), kernel.dim(2));
    if kc_in != c_in {
        return Err(Error::Shape(format!(
            "conv1d kernel expects {} input channels, input has {}",
            kc_in, c_in
        )));
    }
    if bias.dim(0) != c_out {
        return Err(Error::Shape(format!(
            "conv1d bias has {} entries for {} output channels",
            bias.dim(0),
            c_out
        )));
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "conv1d kernel length must be odd for same padding, got {}",
            k
        )));
    }
    Ok((batch, c_in, m, c_out, k))
}

/// `output[b, o, t] = bias[o] + sum_{i, tau} kernel[o, i, tau] * input[b, i, t + tau - k/2]`
/// with zero padding outside the time range.
pub fn conv1d_forward<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (batch, c_in, m, c_out, k) = check_shapes(input, kernel, bias)?;
    let half = (k / 2) as isize;
    let mut out = Tensor::zeros(&[batch, c_out, m]);

    let in_data = input.data();
    out.data_mut()
        .par_chunks_mut(c_out * m)
        .enumerate()
        .for_each(|(b, out_b)| {
            let in_b = &in_data[b * c_in * m..(b + 1) * c_in * m];
            for o in 0..c_out {
                let out_row = &mut out_b[o * m..(o + 1) * m];
                out_row.iter_mut().for_each(|x| *x = bias.data()[o]);
                for i in 0..c_in {
                    let in_row = &in_b[i * m..(i + 1) * m];
                    for tau in 0..k {
                        let w = kernel.at3(o, i, tau);
                        let shift = tau as isize - half;
                        let t0 = (-shift).max(0) as usize;
                        let t1 = ((m as isize - shift).min(m as isize)).max(0) as usize;
                        let src = &in_row[(t0 as isize + shift) as usize..(t1 as isize + shift) as usize];
                        for (dst, &x) in out_row[t0..t1].iter_mut().zip(src) {
                            *dst = *dst + w * x;
                        }
                    }
                }
            }
        });

    out.ensure_finite("conv1d_forward")?;
    Ok(out)
}

/// Exact partials of [`conv1d_forward`] with respect to input, kernel and bias.
pub fn conv1d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    kernel: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (batch, c_in, m) = (input.dim(0), input.dim(1), input.dim(2));
    let (c_out, _, k) = (kernel.dim(0), kernel.dim(1), kernel.dim(2));
    if grad_out.shape() != [batch, c_out, m] {
        return Err(Error::Shape(format!(
            "conv1d_backward cotangent {:?} does not match forward output [{}, {}, {}]",
            grad_out.shape(),
            batch,
            c_out,
            m
        )));
    }
    let half = (k / 2) as isize;

    let mut grad_input = Tensor::zeros(&[batch, c_in, m]);
    let mut grad_kernel = Tensor::zeros(&[c_out, c_in, k]);
    let mut grad_bias = Tensor::zeros(&[c_out]);

    // grad_input[b, i, s] = sum_{o, tau} kernel[o, i, tau] * grad_out[b, o, s - tau + k/2]
    let go_data = grad_out.data();
    grad_input
        .data_mut()
        .par_chunks_mut(c_in * m)
        .enumerate()
        .for_each(|(b, gi_b)| {
            let go_b = &go_data[b * c_out * m..(b + 1) * c_out * m];
            for i in 0..c_in {
                let gi_row = &mut gi_b[i * m..(i + 1) * m];
                for o in 0..c_out {
                    let go_row = &go_b[o * m..(o + 1) * m];
                    for tau in 0..k {
                        let w = kernel.at3(o, i, tau);
                        let shift = half - tau as isize; // s + shift indexes grad_out
                        let s0 = (-shift).max(0) as usize;
                        let s1 = ((m as isize - shift).min(m as isize)).max(0) as usize;
                        let src = &go_row[(s0 as isize + shift) as usize..(s1 as isize + shift) as usize];
                        for (dst, &g) in gi_row[s0..s1].iter_mut().zip(src) {
                            *dst = *dst + w * g;
                        }
                    }
                }
            }
        });

    // grad_kernel[o, i, tau] = sum_{b, t} grad_out[b, o, t] * input[b, i, t + tau - k/2]
    // grad_bias[o] = sum_{b, t} grad_out[b, o, t]
    let in_data = input.data();
    let gk_rows: Vec<(Vec<S>, S)> = (0..c_out)
        .into_par_iter()
        .map(|o| {
            let mut gk = vec![S::zero(); c_in * k];
            let mut gb = S::zero();
            for b in 0..batch {
                let go_row = &go_data[(b * c_out + o) * m..(b * c_out + o + 1) * m];
                gb = gb + go_row.iter().copied().sum();
                for i in 0..c_in {
                    let in_row = &in_data[(b * c_in + i) * m..(b * c_in + i + 1) * m];
                    for tau in 0..k {
                        let shift = tau as isize - half;
                        let t0 = (-shift).max(0) as usize;
                        let t1 = ((m as isize - shift).min(m as isize)).max(0) as usize;
                        let src = &in_row[(t0 as isize + shift) as usize..(t1 as isize + shift) as usize];
                        let mut acc = S::zero();
                        for (&g, &x) in go_row[t0..t1].iter().zip(src) {
                            acc = acc + g * x;
                        }
                        gk[i * k + tau] = gk[i * k + tau] + acc;
                    }
                }
            }
            (gk, gb)
        })
        .collect();
    for (o, (gk, gb)) in gk_rows.into_iter().enumerate() {
        grad_kernel.data_mut()[o * c_in * k..(o + 1) * c_in * k].copy_from_slice(&gk);
        grad_bias.data_mut()[o] = gb;
    }

    grad_input.ensure_finite("conv1d_backward")?;
    grad_kernel.ensure_finite("conv1d_backward")?;
    Ok((grad_input, grad_kernel, grad_bias))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(shape: [usize; 3], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_k1_preserves_input() {
        let input = t3([1, 1, 4], vec![1.0, -2.0, 3.0, 0.5]);
        let kernel = t3([1, 1, 1], vec![1.0]);
        let bias = Tensor::zeros(&[1]);
        let out = conv1d_forward(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn hand_convolution_with_zero_padding() {
        let input = t3([1, 1, 3], vec![1.0, 2.0, 3.0]);
        let kernel = t3([1, 1, 3], vec![1.0, 1.0, 1.0]);
        let bias = Tensor::zeros(&[1]);
        let out = conv1d_forward(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn zero_kernel_yields_constant_bias() {
        let input = t3([2, 3, 5], (0..30).map(|x| x as f64).collect());
        let kernel = Tensor::zeros(&[4, 3, 3]);
        let bias = Tensor::from_vec(&[4], vec![2.5; 4]).unwrap();
        let out = conv1d_forward(&input, &kernel, &bias).unwrap();
        assert!(out.data().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let input = t3([1, 2, 3], vec![0.0; 6]);
        let kernel = Tensor::<f64>::zeros(&[1, 3, 1]);
        let bias = Tensor::zeros(&[1]);
        assert!(matches!(
            conv1d_forward(&input, &kernel, &bias),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn even_kernel_rejected() {
        let input = t3([1, 1, 4], vec![0.0; 4]);
        let kernel = Tensor::<f64>::zeros(&[1, 1, 2]);
        let bias = Tensor::zeros(&[1]);
        assert!(conv1d_forward(&input, &kernel, &bias).is_err());
    }

    #[test]
    fn non_finite_output_surfaces() {
        let input = t3([1, 1, 2], vec![f64::MAX, f64::MAX]);
        let kernel = t3([1, 1, 3], vec![1e300, 1e300, 1e300]);
        let bias = Tensor::zeros(&[1]);
        assert!(matches!(
            conv1d_forward(&input, &kernel, &bias),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let input = t3([2, 2, 4], (0..16).map(|x| x as f64).collect());
        let kernel = t3([3, 2, 3], (0..18).map(|x| x as f64 * 0.1).collect());
        let grad_out = Tensor::zeros(&[2, 3, 4]);
        let (gi, gk, gb) = conv1d_backward(&grad_out, &input, &kernel).unwrap();
        assert!(gi.data().iter().all(|&x| x == 0.0));
        assert!(gk.data().iter().all(|&x| x == 0.0));
        assert!(gb.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn k1_kernel_gradient_is_input_dot_cotangent() {
        // out[t] = w * in[t]  =>  d/dw = sum_t g[t] * in[t]
        let input = t3([1, 1, 3], vec![1.0, 2.0, 3.0]);
        let kernel = t3([1, 1, 1], vec![0.7]);
        let grad_out = t3([1, 1, 3], vec![0.5, -1.0, 2.0]);
        let (_, gk, gb) = conv1d_backward(&grad_out, &input, &kernel).unwrap();
        assert!((gk.data()[0] - (0.5 - 2.0 + 6.0)).abs() < 1e-14);
        assert!((gb.data()[0] - 1.5).abs() < 1e-14);
    }
}
