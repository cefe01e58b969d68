//! Deterministic parallel Monte-Carlo driver.
//!
//! Trials are split into fixed-size chunks keyed by trial index; workers
//! compute chunk results independently and the chunks are concatenated in
//! index order, so the record vector (and every statistic derived from it)
//! is byte-identical regardless of worker count or scheduling.

use anyhow::{Context, Result};
use rayon::prelude::*;

const CHUNK: u64 = 64;

/// Worker count: `SPF_THREADS` when set, available parallelism otherwise.
pub fn thread_count() -> usize {
    if let Ok(v) = std::env::var("SPF_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
        eprintln!("warning: ignoring invalid SPF_THREADS value {v:?}");
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Runs `trials` evaluations of `f(trial_index)` across a worker pool and
/// returns the per-trial records in index order.
pub fn run_trials<F>(trials: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> f64 + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .context("building worker pool")?;
    let n_chunks = trials.div_ceil(CHUNK);
    let chunks: Vec<u64> = (0..n_chunks).collect();
    let nested: Vec<Vec<f64>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|&c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(trials);
                (lo..hi).map(&f).collect()
            })
            .collect()
    });
    Ok(nested.into_iter().flatten().collect())
}

/// Per-trial seed derivation: a fixed 64-bit mix of the base seed and the
/// trial index, so consecutive trials use decorrelated parameter draws.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    let mut z = base ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
