//! Single-precision sketch evaluation for timing parity in the benchmark
//! harness. Projection, weighting, and pair combination run in f32 off the
//! same parameter draw; weight computation stays in f64 upstream.

use num_complex::Complex;

use crate::error::Result;
use crate::fft::transform;
use crate::sketch::{SketchConfig, SketchKind, Side};

enum Params32 {
    Tensor {
        h1: Vec<usize>,
        s1: Vec<f32>,
        h2: Vec<usize>,
        s2: Vec<f32>,
    },
    Maclaurin {
        w1_t: Vec<f32>,
        w2_t: Vec<f32>,
    },
}

/// Sketch parameters downcast once; evaluation then stays in f32.
pub struct Fp32Evaluator {
    d: usize,
    dim: usize,
    params: Params32,
}

impl Fp32Evaluator {
    pub fn new(cfg: &SketchConfig) -> Self {
        let params = match cfg.kind() {
            SketchKind::TensorSketch => Params32::Tensor {
                h1: cfg.hashes(Side::First).to_vec(),
                s1: cfg.signs(Side::First).iter().map(|&v| v as f32).collect(),
                h2: cfg.hashes(Side::Second).to_vec(),
                s2: cfg.signs(Side::Second).iter().map(|&v| v as f32).collect(),
            },
            SketchKind::RandomMaclaurin => Params32::Maclaurin {
                w1_t: cfg
                    .projection_t(Side::First)
                    .as_slice()
                    .iter()
                    .map(|&v| v as f32)
                    .collect(),
                w2_t: cfg
                    .projection_t(Side::Second)
                    .as_slice()
                    .iter()
                    .map(|&v| v as f32)
                    .collect(),
            },
        };
        Self {
            d: cfg.input_dim(),
            dim: cfg.output_dim(),
            params,
        }
    }

    /// `sum_{n1} pair((Psi1 W)_{:,n1}, psi2(x_{n1}))` in f32.
    ///
    /// `data` holds `n` descriptors back to back; `weights`, when given, is
    /// an n-by-n row-major matrix.
    pub fn pooled_sum(&self, data: &[f32], n: usize, weights: Option<&[f32]>) -> Result<Vec<f32>> {
        assert_eq!(data.len(), self.d * n);
        if let Some(w) = weights {
            assert_eq!(w.len(), n * n);
        }
        match &self.params {
            Params32::Tensor { h1, s1, h2, s2 } => {
                let mut p1 = Vec::with_capacity(n);
                let mut p2 = Vec::with_capacity(n);
                for j in 0..n {
                    let x = &data[j * self.d..(j + 1) * self.d];
                    p1.push(self.spectral_sketch(x, h1, s1)?);
                    p2.push(self.spectral_sketch(x, h2, s2)?);
                }
                let mut acc = vec![0.0f32; self.dim];
                let mut prod = vec![Complex::new(0.0f32, 0.0); self.dim];
                for c in 0..n {
                    let left = match weights {
                        Some(w) => {
                            let mut col = vec![Complex::new(0.0f32, 0.0); self.dim];
                            for (m, p1m) in p1.iter().enumerate() {
                                let coef = w[m * n + c];
                                if coef == 0.0 {
                                    continue;
                                }
                                for (o, &x) in col.iter_mut().zip(p1m) {
                                    *o += x.scale(coef);
                                }
                            }
                            col
                        }
                        None => p1[c].clone(),
                    };
                    for ((p, l), r) in prod.iter_mut().zip(&left).zip(&p2[c]) {
                        *p = l * r;
                    }
                    transform(&mut prod, true)?;
                    for (a, p) in acc.iter_mut().zip(&prod) {
                        *a += p.re;
                    }
                }
                Ok(acc)
            }
            Params32::Maclaurin { w1_t, w2_t } => {
                let mut p1 = vec![0.0f32; self.dim * n];
                let mut p2 = vec![0.0f32; self.dim * n];
                for j in 0..n {
                    let x = &data[j * self.d..(j + 1) * self.d];
                    let c1 = &mut p1[j * self.dim..(j + 1) * self.dim];
                    let c2 = &mut p2[j * self.dim..(j + 1) * self.dim];
                    for (i, &xi) in x.iter().enumerate() {
                        let r1 = &w1_t[i * self.dim..(i + 1) * self.dim];
                        let r2 = &w2_t[i * self.dim..(i + 1) * self.dim];
                        for (o, &w) in c1.iter_mut().zip(r1) {
                            *o += xi * w;
                        }
                        for (o, &w) in c2.iter_mut().zip(r2) {
                            *o += xi * w;
                        }
                    }
                }
                let scale = 1.0 / (self.dim as f32).sqrt();
                let mut acc = vec![0.0f32; self.dim];
                let mut left = vec![0.0f32; self.dim];
                for c in 0..n {
                    match weights {
                        Some(w) => {
                            left.fill(0.0);
                            for m in 0..n {
                                let coef = w[m * n + c];
                                if coef == 0.0 {
                                    continue;
                                }
                                let col = &p1[m * self.dim..(m + 1) * self.dim];
                                for (o, &x) in left.iter_mut().zip(col) {
                                    *o += coef * x;
                                }
                            }
                        }
                        None => left.copy_from_slice(&p1[c * self.dim..(c + 1) * self.dim]),
                    }
                    let rcol = &p2[c * self.dim..(c + 1) * self.dim];
                    for ((a, &l), &r) in acc.iter_mut().zip(&left).zip(rcol) {
                        *a += l * r * scale;
                    }
                }
                Ok(acc)
            }
        }
    }

    fn spectral_sketch(&self, x: &[f32], h: &[usize], s: &[f32]) -> Result<Vec<Complex<f32>>> {
        let mut buckets = vec![0.0f32; self.dim];
        crate::sketch::count_sketch_into(x, h, s, &mut buckets);
        let mut buf: Vec<Complex<f32>> =
            buckets.into_iter().map(|v| Complex::new(v, 0.0)).collect();
        transform(&mut buf, false)?;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::LocalFeatureSet;
    use crate::newton_schulz::sqrt_weights;
    use crate::pooling::{ipccp, Preprocess};
    use rand::{Rng, SeedableRng};

    #[test]
    fn f32_forward_tracks_f64_forward() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (d, n, dim, k) = (6, 8, 32, 5);
        let data: Vec<f64> = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = LocalFeatureSet::new(d, n, data.clone()).unwrap();
        let data32: Vec<f32> = data.iter().map(|&v| v as f32).collect();

        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let cfg = SketchConfig::new(kind, d, dim, 17).unwrap();
            let reference = ipccp(&x, &cfg, k, Preprocess::None).unwrap();

            let (w, _) = sqrt_weights(&crate::matrix::gram(&x), k).unwrap();
            let w32: Vec<f32> = w.as_slice().iter().map(|&v| v as f32).collect();
            let eval = Fp32Evaluator::new(&cfg);
            let got = eval.pooled_sum(&data32, n, Some(&w32)).unwrap();

            let norm: f64 = reference.data.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = got
                .iter()
                .zip(&reference.data)
                .map(|(&a, &b)| (a as f64 - b) * (a as f64 - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-3 * norm.max(1.0), "{kind:?}: diff {diff:e}");
        }
    }
}
