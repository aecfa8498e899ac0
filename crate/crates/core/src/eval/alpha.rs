//! Grid over the auxiliary-loss weight: one training run per (alpha, seed)
//! cell, reported per-alpha with per-seed detail and a flag for whether the
//! error decreased monotonically with alpha.

use serde::Serialize;

use crate::error::Result;
use crate::eval::aggregate;

#[derive(Clone, Debug, Serialize)]
pub struct AlphaCell {
    pub seed: u64,
    pub mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub cells: Vec<AlphaCell>,
    pub mean: Option<f64>,
    pub sem: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaGridResult {
    pub rows: Vec<AlphaRow>,
    /// Whether the mean error strictly decreased along the given alpha
    /// order; `None` when some cell failed.
    pub monotone_decreasing: Option<bool>,
}

/// Runs `train_eval(alpha, seed)` over the full grid, up to `jobs` cells in
/// parallel. Cell order (and therefore the report) is deterministic; each
/// run is independently seeded so parallelism cannot change results.
/// Failures are recorded per cell rather than aborting the grid.
pub fn run_alpha_grid<F>(
    alphas: &[f64],
    seeds: &[u64],
    jobs: usize,
    train_eval: F,
) -> Result<AlphaGridResult>
where
    F: Fn(f64, u64) -> Result<f64> + Sync,
{
    let pairs: Vec<(usize, f64, u64)> = alphas
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| seeds.iter().map(move |&s| (i, a, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, u64, std::result::Result<f64, String>)> = pool.install(|| {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|&(i, a, s)| (i, s, train_eval(a, s).map_err(|e| e.to_string())))
            .collect()
    });

    let mut rows: Vec<AlphaRow> = alphas
        .iter()
        .map(|&alpha| AlphaRow {
            alpha,
            cells: Vec::new(),
            mean: None,
            sem: None,
        })
        .collect();
    for (i, seed, outcome) in outcomes {
        rows[i].cells.push(match outcome {
            Ok(mse) => AlphaCell {
                seed,
                mse: Some(mse),
                error: None,
            },
            Err(e) => AlphaCell {
                seed,
                mse: None,
                error: Some(e),
            },
        });
    }
    for row in &mut rows {
        let values: Vec<f64> = row.cells.iter().filter_map(|c| c.mse).collect();
        if values.len() == row.cells.len() && !values.is_empty() {
            let agg = aggregate(&values);
            row.mean = Some(agg.mean);
            row.sem = Some(agg.sem);
        }
    }

    let monotone_decreasing = if rows.iter().all(|r| r.mean.is_some()) && rows.len() > 1 {
        Some(
            rows.windows(2)
                .all(|w| w[1].mean.unwrap() < w[0].mean.unwrap()),
        )
    } else {
        None
    };

    Ok(AlphaGridResult {
        rows,
        monotone_decreasing,
    })
}

/// One row per alpha: mean, sem, seed count, then per-seed values.
pub fn write_alpha_csv(result: &AlphaGridResult, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n_seeds = result.rows.first().map_or(0, |r| r.cells.len());
    let seed_cols: Vec<String> = (0..n_seeds).map(|i| format!("mse_seed_{i}")).collect();
    writeln!(f, "alpha,mse_mean,mse_sem,seeds,{}", seed_cols.join(","))?;
    for row in &result.rows {
        let fmt_opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x}"));
        let per_seed: Vec<String> = row.cells.iter().map(|c| fmt_opt(c.mse)).collect();
        writeln!(
            f,
            "{},{},{},{},{}",
            row.alpha,
            fmt_opt(row.mean),
            fmt_opt(row.sem),
            row.cells.len(),
            per_seed.join(",")
        )?;
    }
    Ok(())
}
