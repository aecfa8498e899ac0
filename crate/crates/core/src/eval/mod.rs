//! Evaluation tooling: test metrics, the asynchronous-sampling lemma
//! verifier, the input-noise robustness study, the alpha grid, and
//! activation export.

mod alpha;
mod export;
mod lemma;
mod robustness;

pub use alpha::{run_alpha_grid, write_alpha_csv, AlphaCell, AlphaGridResult, AlphaRow};
pub use export::export_activations;
pub use lemma::{
    ar2_projection, lemma_coeffs, lemma_verify, write_lemma_csv, LemmaCoefficients, LemmaRow,
    LemmaTable,
};
pub use robustness::{
    robustness_curve, write_robustness_csv, RobustnessReport, RobustnessRow, RobustnessSpec,
};

use crate::error::{Error, Result};
use crate::models::AnyModel;
use crate::ops;
use crate::scalar::Scalar;
use crate::windows::{Split, WindowSet};

const EVAL_CHUNK: usize = 512;

/// Eval-mode mean squared error of a model over one split of a window set.
pub fn test_mse<S: Scalar>(
    model: &mut AnyModel<S>,
    data: &WindowSet<S>,
    split: Split,
) -> Result<f64> {
    let idx = data.indices(split);
    mse_on_samples(model, data, &idx)
}

/// MSE over an explicit list of sample indices.
pub fn mse_on_samples<S: Scalar>(
    model: &mut AnyModel<S>,
    data: &WindowSet<S>,
    idx: &[usize],
) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Empty("no samples to evaluate"));
    }
    let mut acc = 0.0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (w, t) = data.batch(chunk);
        let pred = model.predict(&w)?;
        acc += ops::mse(&pred, &t)?.f64() * chunk.len() as f64 / idx.len() as f64;
    }
    Ok(acc)
}

/// Mean and standard error of the mean across per-seed metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
}

pub fn aggregate(values: &[f64]) -> MeanSem {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return MeanSem { mean, sem: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    MeanSem {
        mean,
        sem: (var / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_matches_hand_arithmetic() {
        let a = aggregate(&[0.1, 0.2, 0.3]);
        assert!((a.mean - 0.2).abs() < 1e-15);
        // sample std 0.1, sem 0.1 / sqrt(3)
        assert!((a.sem - 0.1 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(aggregate(&[0.5]).sem, 0.0);
    }
}
