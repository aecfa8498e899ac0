//! CSV export of significance and offset activations for chosen samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::Socnn;
use crate::ops::Mode;
use crate::scalar::Scalar;
use crate::windows::WindowSet;

/// Writes one row per (sample, output row, lag): the row-normalized
/// significance weight and the per-lag adjusted regressor. Lags count from
/// 1 at the most recent observation back to the window length.
pub fn export_activations<S: Scalar>(
    model: &mut Socnn<S>,
    data: &WindowSet<S>,
    sample_idx: &[usize],
    path: &std::path::Path,
) -> Result<()> {
    use std::io::Write;
    if sample_idx.is_empty() {
        return Err(Error::Empty("no samples selected for activation export"));
    }
    let (w, _) = data.batch(sample_idx);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model.forward(&w, Mode::Eval, &mut rng)?;
    let (d_out, m) = (out.significance.dim(1), out.significance.dim(2));

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "sample_id,output_row,lag_m,significance,offset")?;
    for (b, &sample) in sample_idx.iter().enumerate() {
        for i in 0..d_out {
            let sig = out.significance.row3(b, i);
            let off = out.offsets.row3(b, i);
            for lag in 1..=m {
                let t = m - lag;
                writeln!(f, "{},{},{},{},{}", sample, i, lag, sig[t], off[t])?;
            }
        }
    }
    Ok(())
}
