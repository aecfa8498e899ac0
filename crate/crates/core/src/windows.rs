//! Supervised windowing: slices a frame into (window, target) samples,
//! assigns the chronological train/val/test split, and standardizes
//! features by training-region statistics.
//!
//! A sample with origin row `r` pairs the `M` rows `r - M .. r` (inputs,
//! channels-first) with the target columns of row `r`. Row 0 never enters a
//! window because its duration field is a filler, so origins start at
//! `M + 1`. Origins in the first 80% of rows are randomly assigned
//! train:val = 3:1 from the split seed; the rest are test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ColumnRole, SeriesFrame};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One supervised example, by reference into the owning [`WindowSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSample {
    /// Target row in the frame; the window is the M rows before it.
    pub origin: usize,
    pub split: Split,
}

/// Per-column standardization statistics (identity for indicators).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

pub struct WindowSet<S> {
    /// Standardized copy of the source frame.
    frame: SeriesFrame<S>,
    pub window: usize,
    pub input_cols: Vec<usize>,
    pub target_cols: Vec<usize>,
    /// Positions of the target columns within `input_cols`, when the
    /// targets are themselves model inputs.
    pub anchor_cols: Option<Vec<usize>>,
    pub samples: Vec<WindowSample>,
    pub stats: Vec<ColumnStats>,
    /// First test row: floor(0.8 * n_rows).
    pub boundary: usize,
    pub split_seed: u64,
}

impl<S: Scalar> WindowSet<S> {
    /// Builds the window set. Targets are the `target`-role columns when
    /// present, otherwise all `source-value` columns (the synchronous case,
    /// or the single drawn-value column of an asynchronous frame).
    pub fn from_frame(mut frame: SeriesFrame<S>, window: usize, split_seed: u64) -> Result<Self> {
        let n = frame.n_rows();
        if window == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        if n <= window + 1 {
            return Err(Error::Config(format!(
                "frame with {} rows is too short for window {}",
                n, window
            )));
        }

        let explicit_targets = frame.columns_with_role(ColumnRole::Target);
        let input_cols: Vec<usize> = (0..frame.n_cols())
            .filter(|c| !explicit_targets.contains(c))
            .collect();
        let target_cols = if explicit_targets.is_empty() {
            frame.columns_with_role(ColumnRole::SourceValue)
        } else {
            explicit_targets
        };
        if target_cols.is_empty() {
            return Err(Error::Config("frame has no target columns".into()));
        }
        let anchor_cols = if target_cols.iter().all(|c| input_cols.contains(c)) {
            Some(
                target_cols
                    .iter()
                    .map(|c| input_cols.iter().position(|i| i == c).unwrap())
                    .collect(),
            )
        } else {
            None
        };

        let boundary = (n as f64 * 0.8).floor() as usize;

        // Standardize non-indicator columns by statistics of the rows ahead
        // of the test boundary; constant columns keep std 1.
        let mut stats = Vec::with_capacity(frame.n_cols());
        for col in 0..frame.n_cols() {
            if frame.columns[col].role == ColumnRole::Indicator {
                stats.push(ColumnStats { mean: 0.0, std: 1.0 });
                continue;
            }
            let mut sum = 0.0;
            for row in 0..boundary {
                sum += frame.get(row, col).f64();
            }
            let mean = sum / boundary as f64;
            let mut sq = 0.0;
            for row in 0..boundary {
                let d = frame.get(row, col).f64() - mean;
                sq += d * d;
            }
            let mut std = (sq / boundary as f64).sqrt();
            if std < 1e-12 {
                std = 1.0;
            }
            stats.push(ColumnStats { mean, std });
        }
        for col in 0..frame.n_cols() {
            let ColumnStats { mean, std } = stats[col];
            if mean == 0.0 && std == 1.0 {
                continue;
            }
            for row in 0..n {
                let v = (frame.get(row, col).f64() - mean) / std;
                frame.set(row, col, S::c(v));
            }
        }

        // Origins M+1 .. n-1; the first 80% pool is shuffled and cut 3:1.
        let first_origin = window + 1;
        let pool: Vec<usize> = (first_origin..boundary.max(first_origin)).collect();
        let test: Vec<usize> = (boundary.max(first_origin)..n).collect();
        let mut shuffled = pool.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
        shuffled.shuffle(&mut rng);
        let n_train = shuffled.len() * 3 / 4;
        let mut samples: Vec<WindowSample> = Vec::with_capacity(shuffled.len() + test.len());
        for (i, &origin) in shuffled.iter().enumerate() {
            samples.push(WindowSample {
                origin,
                split: if i < n_train { Split::Train } else { Split::Val },
            });
        }
        for &origin in &test {
            samples.push(WindowSample {
                origin,
                split: Split::Test,
            });
        }
        samples.sort_by_key(|s| s.origin);

        Ok(Self {
            frame,
            window,
            input_cols,
            target_cols,
            anchor_cols,
            samples,
            stats,
            boundary,
            split_seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_cols.len()
    }

    pub fn output_dim(&self) -> usize {
        self.target_cols.len()
    }

    pub fn frame(&self) -> &SeriesFrame<S> {
        &self.frame
    }

    /// Sample indices belonging to a split, in origin order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Assembles `(windows [b, d, M], targets [b, d_out])` for the given
    /// sample indices.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<S>, Tensor<S>) {
        let (d, m) = (self.input_dim(), self.window);
        let d_out = self.output_dim();
        let mut windows = Tensor::zeros(&[idx.len(), d, m]);
        let mut targets = Tensor::zeros(&[idx.len(), d_out]);
        for (b, &i) in idx.iter().enumerate() {
            let origin = self.samples[i].origin;
            for (c, &col) in self.input_cols.iter().enumerate() {
                let dst = windows.row3_mut(b, c);
                for t in 0..m {
                    dst[t] = self.frame.get(origin - m + t, col);
                }
            }
            for (j, &col) in self.target_cols.iter().enumerate() {
                targets.set2(b, j, self.frame.get(origin, col));
            }
        }
        (windows, targets)
    }

    /// Input channel of the single drawn-value column, when the frame has
    /// exactly one `source-value` column (asynchronous layouts).
    pub fn value_input_channel(&self) -> Option<usize> {
        let sv = self.frame.columns_with_role(ColumnRole::SourceValue);
        match sv.as_slice() {
            [col] => self.input_cols.iter().position(|c| c == col),
            _ => None,
        }
    }

    /// Standard deviation of the first differences of the (standardized)
    /// target columns over the training region, averaged across targets.
    pub fn target_diff_std(&self) -> f64 {
        let hi = self.boundary.max(2);
        let mut acc = 0.0;
        for &col in &self.target_cols {
            let diffs: Vec<f64> = (1..hi)
                .map(|r| self.frame.get(r, col).f64() - self.frame.get(r - 1, col).f64())
                .collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
                / diffs.len() as f64;
            acc += var.sqrt();
        }
        acc / self.target_cols.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ColumnSpec;

    fn toy_frame(n: usize) -> SeriesFrame<f64> {
        // value column counts rows, duration constant 2 except row 0.
        let columns = vec![
            ColumnSpec {
                role: ColumnRole::SourceValue,
                name: "value".into(),
            },
            ColumnSpec {
                role: ColumnRole::Duration,
                name: "duration".into(),
            },
        ];
        let mut values = Vec::new();
        for r in 0..n {
            values.push(r as f64);
            values.push(if r == 0 { 0.0 } else { 2.0 + (r % 3) as f64 });
        }
        SeriesFrame::new("toy", columns, values).unwrap()
    }

    #[test]
    fn sample_count_matches_index_arithmetic() {
        let set = WindowSet::from_frame(toy_frame(100), 60, 0).unwrap();
        assert_eq!(set.samples.len(), 39);
        let train = set.indices(Split::Train).len();
        let val = set.indices(Split::Val).len();
        let test = set.indices(Split::Test).len();
        // boundary = 80: origins 61..=79 pool (19), 80..=99 test (20)
        assert_eq!(train + val, 19);
        assert_eq!(train, 19 * 3 / 4);
        assert_eq!(test, 20);
    }

    #[test]
    fn window_is_exactly_the_rows_before_origin() {
        let set = WindowSet::from_frame(toy_frame(80), 10, 0).unwrap();
        let idx = [0usize];
        let origin = set.samples[0].origin;
        let (windows, targets) = set.batch(&idx);
        // value column is standardized; undo it for the check
        let ColumnStats { mean, std } = set.stats[0];
        for t in 0..10 {
            let raw = windows.at3(0, 0, t) * std + mean;
            assert!((raw - (origin - 10 + t) as f64).abs() < 1e-9);
        }
        let target_raw = targets.at2(0, 0) * std + mean;
        assert!((target_raw - origin as f64).abs() < 1e-9);
    }

    #[test]
    fn splits_are_disjoint_and_cover_all_samples() {
        let set = WindowSet::from_frame(toy_frame(200), 30, 5).unwrap();
        let mut seen = vec![0u8; set.samples.len()];
        for split in [Split::Train, Split::Val, Split::Test] {
            for i in set.indices(split) {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn split_is_deterministic_in_the_seed() {
        let a = WindowSet::from_frame(toy_frame(150), 20, 9).unwrap();
        let b = WindowSet::from_frame(toy_frame(150), 20, 9).unwrap();
        let c = WindowSet::from_frame(toy_frame(150), 20, 10).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn test_samples_sit_past_the_boundary() {
        let set = WindowSet::from_frame(toy_frame(100), 20, 0).unwrap();
        for s in &set.samples {
            if s.split == Split::Test {
                assert!(s.origin >= set.boundary);
            } else {
                assert!(s.origin < set.boundary);
            }
        }
    }

    #[test]
    fn too_short_frame_is_an_error() {
        assert!(WindowSet::from_frame(toy_frame(61), 60, 0).is_err());
        assert!(WindowSet::from_frame(toy_frame(62), 60, 0).is_ok());
    }

    #[test]
    fn standardization_leaves_indicators_untouched() {
        let columns = vec![
            ColumnSpec {
                role: ColumnRole::Indicator,
                name: "ind".into(),
            },
            ColumnSpec {
                role: ColumnRole::SourceValue,
                name: "value".into(),
            },
        ];
        let mut values = Vec::new();
        for r in 0..50 {
            values.push((r % 2) as f64);
            values.push(100.0 + r as f64);
        }
        let frame = SeriesFrame::new("ind", columns, values).unwrap();
        let set = WindowSet::from_frame(frame, 5, 0).unwrap();
        for r in 0..50 {
            let v = set.frame().get(r, 0);
            assert!(v == 0.0 || v == 1.0);
        }
        // standardized value column has roughly zero mean over the train region
        let mean: f64 = (0..set.boundary).map(|r| set.frame().get(r, 1)).sum::<f64>()
            / set.boundary as f64;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn anchor_positions_follow_input_columns() {
        let set = WindowSet::from_frame(toy_frame(100), 10, 0).unwrap();
        assert_eq!(set.anchor_cols, Some(vec![0]));
        assert_eq!(set.value_input_channel(), Some(0));
    }
}
