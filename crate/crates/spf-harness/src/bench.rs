//! Timing sweeps over (d, n, D) grids for scaling-law checks.
//!
//! Wall times are medians over `reps` runs after 3 warm-up runs in a single
//! process; absolute numbers are hardware-specific and only scaling ratios
//! are meaningful.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ipccp::fp32::Fp32Evaluator;
use ipccp::grad::{forward_with_tape, vjp};
use ipccp::matrix::gram;
use ipccp::newton_schulz::sqrt_weights;
use ipccp::pooling::{ipccp, Preprocess};
use ipccp::sketch::{SketchConfig, SketchKind};
use ipccp::LocalFeatureSet;

use crate::feature_file::Dtype;
use crate::report::csv_writer;

const WARMUP: usize = 3;

/// Each timed sample batches enough runs to reach this duration; single
/// millisecond-scale runs are too noisy on shared machines.
const TARGET_SAMPLE_S: f64 = 0.02;
const MAX_BATCH: usize = 1000;

pub struct BenchParams {
    pub sketch: SketchKind,
    pub d_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub dim_list: Vec<usize>,
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    pub dtype: Dtype,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BenchCell {
    pub d: usize,
    pub n: usize,
    pub dim: usize,
    pub forward_median_s: f64,
    /// Only measured on the f64 path; the f32 path times the forward alone.
    pub forward_vjp_median_s: Option<f64>,
}

pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    let out: Vec<usize> = text
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow::anyhow!("bad size list {text:?}: {e}"))?;
    if out.is_empty() || out.contains(&0) {
        bail!("size list {text:?} must contain positive integers");
    }
    Ok(out)
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

/// Runs `op` for 3 warm-up runs, then `reps` timed samples, each batching
/// enough runs to last [`TARGET_SAMPLE_S`]; returns the median per-run time.
///
/// Samples are spaced by idle gaps matching their own duration so that
/// duty-cycle CPU limiters (burstable VMs, thermal caps) replenish between
/// samples instead of throttling mid-measurement.
fn timed_median(reps: usize, mut op: impl FnMut()) -> f64 {
    let mut estimate = f64::INFINITY;
    for _ in 0..WARMUP {
        let t0 = Instant::now();
        op();
        estimate = estimate.min(t0.elapsed().as_secs_f64());
    }
    let batch = ((TARGET_SAMPLE_S / estimate.max(1e-9)).ceil() as usize).clamp(1, MAX_BATCH);
    let mut samples = Vec::with_capacity(reps);
    for rep in 0..reps {
        let t0 = Instant::now();
        for _ in 0..batch {
            op();
        }
        let elapsed = t0.elapsed();
        samples.push(elapsed.as_secs_f64() / batch as f64);
        if rep + 1 < reps {
            std::thread::sleep(elapsed.min(std::time::Duration::from_millis(50)));
        }
    }
    median(&mut samples)
}

fn random_set(d: usize, n: usize, seed: u64) -> LocalFeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    LocalFeatureSet::new(d, n, data).expect("generated data is valid")
}

/// Times one grid cell: median forward time, and median forward+pullback
/// time on the f64 path.
pub fn measure_cell(
    sketch: SketchKind,
    d: usize,
    n: usize,
    dim: usize,
    k: usize,
    reps: usize,
    seed: u64,
    dtype: Dtype,
) -> Result<BenchCell> {
    let x = random_set(d, n, seed);
    let cfg = SketchConfig::new(sketch, d, dim, seed ^ 0x5bf0_3635)?;

    let forward_median_s;
    let mut forward_vjp_median_s = None;
    match dtype {
        Dtype::F64 => {
            forward_median_s = timed_median(reps, || {
                let out = ipccp(&x, &cfg, k, Preprocess::None).expect("validated cell");
                std::hint::black_box(&out.data);
            });
            let upstream = vec![1.0 / (dim as f64).sqrt(); dim];
            forward_vjp_median_s = Some(timed_median(reps, || {
                let (_, tape) =
                    forward_with_tape(&x, &cfg, k, Preprocess::None).expect("validated cell");
                let g = vjp(&tape, &upstream).expect("matching upstream");
                std::hint::black_box(g.as_slice());
            }));
        }
        Dtype::F32 => {
            let eval = Fp32Evaluator::new(&cfg);
            let data32: Vec<f32> = x.as_slice().iter().map(|&v| v as f32).collect();
            forward_median_s = timed_median(reps, || {
                let (w, _) = sqrt_weights(&gram(&x), k).expect("validated cell");
                let w32: Vec<f32> = w.as_slice().iter().map(|&v| v as f32).collect();
                let out = eval.pooled_sum(&data32, n, Some(&w32)).expect("validated cell");
                std::hint::black_box(&out);
            });
        }
    }
    Ok(BenchCell {
        d,
        n,
        dim,
        forward_median_s,
        forward_vjp_median_s,
    })
}

/// Busy-spins long enough for clock boost and caches to settle; cold starts
/// otherwise inflate whichever cell happens to run first.
fn warm_up_cpu() {
    let t0 = Instant::now();
    let mut acc = 0.0f64;
    while t0.elapsed().as_secs_f64() < 0.3 {
        for i in 0..10_000 {
            acc += (i as f64).sqrt();
        }
        std::hint::black_box(acc);
    }
}

pub fn run_bench(p: &BenchParams) -> Result<Vec<BenchCell>> {
    warm_up_cpu();
    let mut writer = csv_writer(&p.out)?;
    writer.write_record([
        "sketch",
        "dtype",
        "d",
        "n",
        "D",
        "k",
        "reps",
        "forward_median_s",
        "forward_vjp_median_s",
    ])?;
    let mut cells = Vec::new();
    let mut cell_index = 0u64;
    for &d in &p.d_list {
        for &n in &p.n_list {
            for &dim in &p.dim_list {
                if p.sketch == SketchKind::TensorSketch && !dim.is_power_of_two() {
                    bail!("tensor sketch requires power-of-two D, got {dim}");
                }
                let cell = measure_cell(
                    p.sketch,
                    d,
                    n,
                    dim,
                    p.k,
                    p.reps,
                    crate::trials::trial_seed(p.seed, cell_index),
                    p.dtype,
                )?;
                writer.write_record([
                    crate::experiments::sketch_name(p.sketch).to_string(),
                    p.dtype.to_string(),
                    d.to_string(),
                    n.to_string(),
                    dim.to_string(),
                    p.k.to_string(),
                    p.reps.to_string(),
                    format!("{}", cell.forward_median_s),
                    cell.forward_vjp_median_s
                        .map(|v| format!("{v}"))
                        .unwrap_or_default(),
                ])?;
                println!(
                    "bench: d={d} n={n} D={dim} forward {:.3e}s{}",
                    cell.forward_median_s,
                    cell.forward_vjp_median_s
                        .map(|v| format!(" forward+vjp {v:.3e}s"))
                        .unwrap_or_default()
                );
                cells.push(cell);
                cell_index += 1;
            }
        }
    }
    writer.flush()?;
    Ok(cells)
}
