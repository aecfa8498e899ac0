//! Input-noise robustness study: perturb the value dimension of a fixed 20%
//! of past lags with one shared uniform draw per window, sweep the noise
//! magnitude over a symmetric grid, and track the error separately for
//! windows of train and test origin.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mse_on_samples;
use crate::models::AnyModel;
use crate::ops::{self, Mode};
use crate::scalar::Scalar;
use crate::windows::{Split, WindowSet};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessSpec {
    /// Observations to perturb, half train-origin and half test-origin.
    pub n_obs: usize,
    /// Grid points, evenly spaced on [-range_sigmas, +range_sigmas] sigma.
    pub n_gammas: usize,
    pub range_sigmas: f64,
    /// Every `lag_stride`-th lag, counted from the most recent, is noised.
    pub lag_stride: usize,
    pub seed: u64,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self {
            n_obs: 6000,
            n_gammas: 128,
            range_sigmas: 6.0,
            lag_stride: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RobustnessRow {
    pub gamma: f64,
    pub mse_train_origin: f64,
    pub mse_test_origin: f64,
    /// Mean over windows and output rows of the total significance mass on
    /// the noised lags. Only emitted by the significance-offset model.
    pub significance_noised: Option<f64>,
    /// Mean absolute per-lag regressor on the noised lags.
    pub abs_offset_noised: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustnessReport {
    pub spec: RobustnessSpec,
    /// Noise unit: standard deviation of the first differences of the
    /// target series over the training region.
    pub sigma: f64,
    /// Time indices of the perturbed lags within the window.
    pub mask_times: Vec<usize>,
    pub value_channel: usize,
    pub n_train_origin: usize,
    pub n_test_origin: usize,
    pub clean_mse_train_origin: f64,
    pub clean_mse_test_origin: f64,
    pub rows: Vec<RobustnessRow>,
}

/// Time indices perturbed within a window of length `m`: lags 0, stride,
/// 2*stride, ... from the most recent observation backwards.
pub fn mask_times(m: usize, stride: usize) -> Vec<usize> {
    let mut times: Vec<usize> = (0..)
        .map(|i| i * stride)
        .take_while(|&lag| lag < m)
        .map(|lag| m - 1 - lag)
        .collect();
    times.sort_unstable();
    times
}

pub fn robustness_curve<S: Scalar>(
    model: &mut AnyModel<S>,
    data: &WindowSet<S>,
    spec: &RobustnessSpec,
) -> Result<RobustnessReport> {
    if spec.n_gammas < 2 || spec.lag_stride == 0 || spec.n_obs == 0 {
        return Err(Error::Config("robustness spec degenerate".into()));
    }
    let value_channel = data.value_input_channel().ok_or_else(|| {
        Error::Config("robustness needs a frame with a single value column".into())
    })?;
    let m = data.window;
    let times = mask_times(m, spec.lag_stride);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half = spec.n_obs / 2;
    let pick = |idx: Vec<usize>, rng: &mut ChaCha8Rng| {
        let mut idx = idx;
        idx.shuffle(rng);
        idx.truncate(half);
        idx.sort_unstable();
        idx
    };
    let train_idx = pick(data.indices(Split::Train), &mut rng);
    let test_idx = pick(data.indices(Split::Test), &mut rng);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Empty("robustness needs train and test samples"));
    }

    // One uniform draw per observation, shared across all masked lags and
    // the whole gamma grid.
    let xi_train: Vec<f64> = (0..train_idx.len()).map(|_| rng.gen()).collect();
    let xi_test: Vec<f64> = (0..test_idx.len()).map(|_| rng.gen()).collect();

    let sigma = data.target_diff_std();
    let lo = -spec.range_sigmas * sigma;
    let step = 2.0 * spec.range_sigmas * sigma / (spec.n_gammas - 1) as f64;

    let clean_mse_train_origin = mse_on_samples(model, data, &train_idx)?;
    let clean_mse_test_origin = mse_on_samples(model, data, &test_idx)?;

    let mut rows = Vec::with_capacity(spec.n_gammas);
    for p in 0..spec.n_gammas {
        let gamma = lo + p as f64 * step;
        let (mse_train, _, _) = eval_noised(
            model,
            data,
            &train_idx,
            &xi_train,
            gamma,
            value_channel,
            &times,
        )?;
        let (mse_test, sig, off) = eval_noised(
            model,
            data,
            &test_idx,
            &xi_test,
            gamma,
            value_channel,
            &times,
        )?;
        rows.push(RobustnessRow {
            gamma,
            mse_train_origin: mse_train,
            mse_test_origin: mse_test,
            significance_noised: sig,
            abs_offset_noised: off,
        });
    }

    Ok(RobustnessReport {
        spec: spec.clone(),
        sigma,
        mask_times: times,
        value_channel,
        n_train_origin: train_idx.len(),
        n_test_origin: test_idx.len(),
        clean_mse_train_origin,
        clean_mse_test_origin,
        rows,
    })
}

/// Applies `xi_n * gamma` at the masked (value-channel, time) positions of
/// each window, evaluates against unchanged targets, and for the
/// significance-offset model averages its diagnostics over the mask.
fn eval_noised<S: Scalar>(
    model: &mut AnyModel<S>,
    data: &WindowSet<S>,
    idx: &[usize],
    xi: &[f64],
    gamma: f64,
    value_channel: usize,
    times: &[usize],
) -> Result<(f64, Option<f64>, Option<f64>)> {
    const CHUNK: usize = 512;
    let n = idx.len();
    let mut mse_acc = 0.0;
    let mut sig_acc = 0.0;
    let mut off_acc = 0.0;
    let mut diag_count = 0.0;
    let is_socnn = model.as_socnn_mut().is_some();

    for (chunk_idx, chunk) in idx.chunks(CHUNK).enumerate() {
        let (mut w, t) = data.batch(chunk);
        for (b, _) in chunk.iter().enumerate() {
            let shift = xi[chunk_idx * CHUNK + b] * gamma;
            let row = w.row3_mut(b, value_channel);
            for &time in times {
                row[time] = row[time] + S::c(shift);
            }
        }
        if let Some(socnn) = model.as_socnn_mut() {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = socnn.forward(&w, Mode::Eval, &mut rng)?;
            mse_acc += ops::mse(&out.prediction, &t)?.f64() * chunk.len() as f64 / n as f64;
            let d_out = out.significance.dim(1);
            for b in 0..chunk.len() {
                for i in 0..d_out {
                    let s = out.significance.row3(b, i);
                    let o = out.offsets.row3(b, i);
                    for &time in times {
                        sig_acc += s[time].f64();
                        off_acc += o[time].f64().abs();
                    }
                    diag_count += 1.0;
                }
            }
        } else {
            let pred = model.predict(&w)?;
            mse_acc += ops::mse(&pred, &t)?.f64() * chunk.len() as f64 / n as f64;
        }
    }

    if is_socnn {
        // total significance per row; mean absolute offset per masked lag
        let sig = sig_acc / diag_count;
        let off = off_acc / (diag_count * times.len() as f64);
        Ok((mse_acc, Some(sig), Some(off)))
    } else {
        Ok((mse_acc, None, None))
    }
}

/// Columns: gamma, mse_train_origin, mse_test_origin, and for the
/// significance-offset model the two diagnostic columns.
pub fn write_robustness_csv(report: &RobustnessReport, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let with_diag = report.rows.first().map_or(false, |r| r.significance_noised.is_some());
    if with_diag {
        writeln!(
            f,
            "gamma,mse_train_origin,mse_test_origin,significance_noised,abs_offset_noised"
        )?;
        for r in &report.rows {
            writeln!(
                f,
                "{},{},{},{},{}",
                r.gamma,
                r.mse_train_origin,
                r.mse_test_origin,
                r.significance_noised.unwrap(),
                r.abs_offset_noised.unwrap()
            )?;
        }
    } else {
        writeln!(f, "gamma,mse_train_origin,mse_test_origin")?;
        for r in &report.rows {
            writeln!(f, "{},{},{}", r.gamma, r.mse_train_origin, r.mse_test_origin)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_covers_every_fifth_lag_from_most_recent() {
        let times = mask_times(60, 5);
        assert_eq!(times.len(), 12);
        // lag 0 is time 59, lag 55 is time 4
        assert_eq!(times, vec![4, 9, 14, 19, 24, 29, 34, 39, 44, 49, 54, 59]);
    }

    #[test]
    fn short_windows_mask_fewer_lags() {
        assert_eq!(mask_times(8, 5), vec![2, 7]);
        assert_eq!(mask_times(5, 5), vec![4]);
    }
}
