//! Seeded synthetic descriptor-set generation.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::feature_file::{Dtype, FeatureFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    /// Standard normal entries.
    Gaussian,
    /// Uniform entries on [-1, 1).
    Uniform,
}

impl std::fmt::Display for Dist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dist::Gaussian => "gaussian",
            Dist::Uniform => "uniform",
        })
    }
}

pub struct GenParams {
    pub d: u32,
    pub n: u32,
    pub count: u32,
    pub seed: u64,
    pub dist: Dist,
    pub dtype: Dtype,
    pub out: PathBuf,
}

/// Writes `count` files named `feat_0000.spf`, ... under `out`. One ChaCha
/// stream per file index, so the set is deterministic per seed and
/// independent of generation order.
pub fn run(p: &GenParams) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&p.out)
        .with_context(|| format!("creating {}", p.out.display()))?;
    let mut paths = Vec::with_capacity(p.count as usize);
    for i in 0..p.count {
        let path = p.out.join(format!("feat_{i:04}.spf"));
        let data = generate_values(p.d, p.n, p.seed, i, p.dist);
        FeatureFile::new(p.d, p.n, p.dtype, data)?.write(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn generate_values(d: u32, n: u32, seed: u64, file_index: u32, dist: Dist) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(file_index as u64);
    let count = (d as usize) * (n as usize);
    match dist {
        Dist::Gaussian => (0..count).map(|_| rng.sample(StandardNormal)).collect(),
        Dist::Uniform => (0..count).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

/// Reads a generated file straight back as a descriptor set.
pub fn load_set(path: &Path) -> Result<ipccp::LocalFeatureSet> {
    FeatureFile::read(path)?.to_feature_set()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |sub: &str| GenParams {
            d: 4,
            n: 6,
            count: 2,
            seed: 9,
            dist: Dist::Gaussian,
            dtype: Dtype::F64,
            out: dir.path().join(sub),
        };
        let a = run(&mk("a")).unwrap();
        let b = run(&mk("b")).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
    }

    #[test]
    fn gaussian_columns_are_centered() {
        // pooled mean of n*count >= 1e4 standard normal draws is 0 within
        // four standard errors
        let mut sum = 0.0;
        let mut total = 0usize;
        for i in 0..10 {
            let vals = generate_values(4, 256, 33, i, Dist::Gaussian);
            sum += vals.iter().sum::<f64>();
            total += vals.len();
        }
        let mean = sum / total as f64;
        assert!(total >= 10_000);
        assert!(mean.abs() <= 4.0 / (total as f64).sqrt(), "mean {mean:e}");
    }

    #[test]
    fn uniform_values_stay_in_range() {
        let vals = generate_values(8, 32, 5, 0, Dist::Uniform);
        assert!(vals.iter().all(|&v| (-1.0..1.0).contains(&v)));
    }
}
