//! Linear vector-autoregression baseline, fit in closed form by ridge
//! normal equations rather than gradient descent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::checkpoint::{self, CheckpointMeta};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub window: usize,
    pub ridge: f64,
}

/// `y = coeffs * vec(window) + intercept`, one affine map per output.
#[derive(Clone)]
pub struct VarModel<S> {
    pub config: VarConfig,
    /// `[output_dim, input_dim * window]`
    pub coeffs: Tensor<S>,
    /// `[output_dim]`
    pub intercept: Tensor<S>,
}

impl<S: Scalar> VarModel<S> {
    /// Least-squares fit of targets against flattened windows with ridge
    /// regularization `lambda * I` on the full system (intercept included).
    /// The normal equations are solved by Cholesky decomposition, which
    /// fails exactly when the regularized system is not positive definite;
    /// pass `ridge > 0` for degenerate data.
    pub fn fit(windows: &Tensor<S>, targets: &Tensor<S>, ridge: f64) -> Result<Self> {
        if windows.shape().len() != 3 || targets.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "var_fit expects windows [n, d, m] and targets [n, d_out]; got {:?} {:?}",
                windows.shape(),
                targets.shape()
            )));
        }
        let (n, d, m) = (windows.dim(0), windows.dim(1), windows.dim(2));
        let d_out = targets.dim(1);
        if targets.dim(0) != n {
            return Err(Error::Shape("window/target counts differ".into()));
        }
        let p = d * m + 1; // flattened window plus intercept column
        if ridge < 0.0 {
            return Err(Error::Config("ridge must be non-negative".into()));
        }

        // Accumulate the upper triangle of X'X and X'Y in f64, in sample
        // chunks summed in fixed order so the fit is deterministic.
        let feat = |row: &[S], buf: &mut [f64]| {
            for (dst, &x) in buf[..p - 1].iter_mut().zip(row) {
                *dst = x.f64();
            }
            buf[p - 1] = 1.0;
        };
        let chunk = 256usize;
        let ranges: Vec<(usize, usize)> = (0..n)
            .step_by(chunk)
            .map(|s| (s, (s + chunk).min(n)))
            .collect();
        let partials: Vec<(Vec<f64>, Vec<f64>)> = ranges
            .par_iter()
            .map(|&(s, e)| {
                let mut g = vec![0.0f64; p * p];
                let mut r = vec![0.0f64; p * d_out];
                let mut x = vec![0.0f64; p];
                for row in s..e {
                    feat(&windows.data()[row * d * m..(row + 1) * d * m], &mut x);
                    for i in 0..p {
                        let xi = x[i];
                        if xi == 0.0 {
                            continue;
                        }
                        let gr = &mut g[i * p..(i + 1) * p];
                        for (dst, &xj) in gr[i..].iter_mut().zip(&x[i..]) {
                            *dst += xi * xj;
                        }
                    }
                    let t = targets.row2(row);
                    for j in 0..d_out {
                        let tj = t[j].f64();
                        for i in 0..p {
                            r[i * d_out + j] += x[i] * tj;
                        }
                    }
                }
                (g, r)
            })
            .collect();
        let mut gram = vec![0.0f64; p * p];
        let mut rhs = vec![0.0f64; p * d_out];
        for (g, r) in partials {
            for (a, b) in gram.iter_mut().zip(&g) {
                *a += b;
            }
            for (a, b) in rhs.iter_mut().zip(&r) {
                *a += b;
            }
        }
        for i in 0..p {
            gram[i * p + i] += ridge;
            for j in 0..i {
                gram[i * p + j] = gram[j * p + i];
            }
        }

        let solution = cholesky_solve(&mut gram, &mut rhs, p, d_out)?;
        let mut coeffs = Tensor::zeros(&[d_out, p - 1]);
        let mut intercept = Tensor::zeros(&[d_out]);
        for j in 0..d_out {
            for i in 0..p - 1 {
                coeffs.set2(j, i, S::c(solution[i * d_out + j]));
            }
            intercept.data_mut()[j] = S::c(solution[(p - 1) * d_out + j]);
        }
        Ok(Self {
            config: VarConfig {
                input_dim: d,
                output_dim: d_out,
                window: m,
                ridge,
            },
            coeffs,
            intercept,
        })
    }

    pub fn predict(&self, windows: &Tensor<S>) -> Result<Tensor<S>> {
        let (d, m) = (self.config.input_dim, self.config.window);
        if windows.shape().len() != 3 || windows.dim(1) != d || windows.dim(2) != m {
            return Err(Error::Shape(format!(
                "var_predict: windows {:?} vs configured [_, {}, {}]",
                windows.shape(),
                d,
                m
            )));
        }
        let n = windows.dim(0);
        let d_out = self.config.output_dim;
        let mut out = Tensor::zeros(&[n, d_out]);
        for row in 0..n {
            let x = &windows.data()[row * d * m..(row + 1) * d * m];
            for j in 0..d_out {
                let w = self.coeffs.row2(j);
                let mut acc = self.intercept.data()[j];
                for (&wi, &xi) in w.iter().zip(x) {
                    acc = acc + wi * xi;
                }
                out.set2(row, j, acc);
            }
        }
        out.ensure_finite("var_predict")?;
        Ok(out)
    }

    pub fn save(&mut self, path: &std::path::Path) -> Result<()> {
        let meta = CheckpointMeta {
            model: "var".into(),
            config: serde_json::to_value(&self.config)?,
        };
        let named = vec![
            ("coeffs".to_string(), self.coeffs.clone()),
            ("intercept".to_string(), self.intercept.clone()),
        ];
        checkpoint::write_checkpoint(path, &meta, &named)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (meta, tensors) = checkpoint::read_checkpoint::<S>(path)?;
        let config: VarConfig = serde_json::from_value(meta.config)?;
        let find = |name: &str| -> Result<Tensor<S>> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {:?} missing", name)))
        };
        let coeffs = find("coeffs")?;
        let intercept = find("intercept")?;
        if coeffs.shape() != [config.output_dim, config.input_dim * config.window] {
            return Err(Error::Checkpoint("coefficient shape mismatch".into()));
        }
        Ok(Self {
            config,
            coeffs,
            intercept,
        })
    }
}

/// Solves `A X = B` for symmetric positive-definite `A` (p x p, row-major)
/// with `B` holding `cols` right-hand sides (p x cols). Overwrites both.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], p: usize, cols: usize) -> Result<Vec<f64>> {
    // Pivots reduced to rounding residue (relative to the original
    // diagonal) mean rank deficiency, not positive definiteness.
    let diag: Vec<f64> = (0..p).map(|i| a[i * p + i]).collect();
    // In-place lower Cholesky.
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= a[i * p + k] * a[j * p + k];
            }
            if i == j {
                if sum <= diag[i] * 1e-13 || !sum.is_finite() {
                    return Err(Error::Singular(format!(
                        "normal equations not positive definite at pivot {} (add ridge)",
                        i
                    )));
                }
                a[i * p + i] = sum.sqrt();
            } else {
                a[i * p + j] = sum / a[j * p + j];
            }
        }
    }
    // Forward then backward substitution per right-hand side.
    for c in 0..cols {
        for i in 0..p {
            let mut sum = b[i * cols + c];
            for k in 0..i {
                sum -= a[i * p + k] * b[k * cols + c];
            }
            b[i * cols + c] = sum / a[i * p + i];
        }
        for i in (0..p).rev() {
            let mut sum = b[i * cols + c];
            for k in i + 1..p {
                sum -= a[k * p + i] * b[k * cols + c];
            }
            b[i * cols + c] = sum / a[i * p + i];
        }
    }
    Ok(b.to_vec())
}
