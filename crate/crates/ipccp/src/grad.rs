//! Reverse-mode derivatives of the pooling pipeline with respect to the
//! input descriptors, plus a finite-difference verification engine.
//!
//! The forward recurrences are differentiated exactly as written: the
//! pullback walks backward through the pair combiner, the weighted
//! projection (both factors), the stored Newton–Schulz iterates, the trace
//! normalization (whose derivative carries an identity-matrix correction
//! term), the Gram map, and the preprocessing substitution. Sketch
//! parameters are constants and are never differentiated.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{frobenius_inner_raw, gram, LocalFeatureSet, Matrix};
use crate::newton_schulz::sqrt_weights_recorded;
use crate::pooling::{apply_preprocess, pooled_sum_parts, PoolMeta, PooledFeature, Preprocess};
use crate::sketch::{
    pair_cotangent, project_pullback_complex, project_pullback_real, real_adjoint_product,
    PairCotangent, SketchConfig, SketchData, SketchedMatrix, Side,
};

enum TapeWeights {
    /// Plain compact bilinear pooling: no Gram matrix, no iteration.
    Identity,
    NewtonSchulz {
        gram: Matrix,
        trace: f64,
        /// `(Y_j, Z_j)` for `j = 0..=k`.
        states: Vec<(Matrix, Matrix)>,
        weights: Matrix,
    },
}

/// Recorded primal intermediates of one forward evaluation.
pub struct Tape<'a> {
    cfg: &'a SketchConfig,
    original: LocalFeatureSet,
    preprocess: Preprocess,
    xp: LocalFeatureSet,
    weights: TapeWeights,
    p1: SketchedMatrix,
    p2: SketchedMatrix,
    weighted: SketchedMatrix,
    output: Vec<f64>,
    k: usize,
}

impl Tape<'_> {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Re-runs the recorded forward pass; bit-matches the stored output.
    pub fn replay(&self) -> Result<Vec<f64>> {
        match &self.weights {
            TapeWeights::Identity => {
                Ok(crate::pooling::pooled_sum(self.cfg, &self.original, None, 0.0)?)
            }
            TapeWeights::NewtonSchulz { .. } => {
                Ok(crate::pooling::ipccp(&self.original, self.cfg, self.k, self.preprocess)?.data)
            }
        }
    }

    /// Number of retained iteration states (k + 1 on the square-root path).
    pub fn retained_iterates(&self) -> usize {
        match &self.weights {
            TapeWeights::Identity => 0,
            TapeWeights::NewtonSchulz { states, .. } => states.len(),
        }
    }

    /// Approximate heap footprint of the recorded intermediates.
    pub fn memory_bytes(&self) -> usize {
        let mat = |m: &Matrix| m.rows() * m.cols() * std::mem::size_of::<f64>();
        let sketch = |s: &SketchedMatrix| {
            let per = if s.is_complex() {
                std::mem::size_of::<Complex64>()
            } else {
                std::mem::size_of::<f64>()
            };
            s.dim() * s.n() * per
        };
        let weights = match &self.weights {
            TapeWeights::Identity => 0,
            TapeWeights::NewtonSchulz {
                gram,
                states,
                weights,
                ..
            } => {
                mat(gram)
                    + mat(weights)
                    + states.iter().map(|(y, z)| mat(y) + mat(z)).sum::<usize>()
            }
        };
        weights
            + sketch(&self.p1)
            + sketch(&self.p2)
            + sketch(&self.weighted)
            + self.output.len() * std::mem::size_of::<f64>()
            + self.xp.as_slice().len() * std::mem::size_of::<f64>()
    }

    /// The Gram-matrix cotangent produced by the iteration pullback for a
    /// given upstream vector; diagnostic hook for the symmetry property.
    pub fn gram_cotangent(&self, upstream: &[f64]) -> Result<Option<Matrix>> {
        let pulled = pullback(self, upstream)?;
        Ok(pulled.gram_cotangent)
    }
}

/// Forward square-root pooling pass that records every intermediate needed
/// by [`vjp`]. The output is bit-identical to [`crate::pooling::ipccp`]: the
/// two run the same code path.
pub fn forward_with_tape<'a>(
    x: &LocalFeatureSet,
    cfg: &'a SketchConfig,
    k: usize,
    preprocess: Preprocess,
) -> Result<(PooledFeature, Tape<'a>)> {
    let xp = apply_preprocess(x, preprocess);
    if xp.dim() != cfg.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.input_dim(),
            actual: xp.dim(),
        });
    }
    let s = gram(&xp);
    let (w, trace, states) = sqrt_weights_recorded(&s, k)?;
    let parts = pooled_sum_parts(cfg, &xp, Some(&w), 0.0)?;
    let feature = PooledFeature {
        data: parts.data.clone(),
        meta: PoolMeta {
            kind: cfg.kind(),
            seed: cfg.seed(),
            pipeline: format!("ipccp[k={k},pre={preprocess}]"),
        },
    };
    let tape = Tape {
        cfg,
        original: x.clone(),
        preprocess,
        xp,
        weights: TapeWeights::NewtonSchulz {
            gram: s.into_matrix(),
            trace,
            states,
            weights: w,
        },
        p1: parts.p1,
        p2: parts.p2,
        weighted: parts.weighted,
        output: parts.data,
        k,
    };
    Ok((feature, tape))
}

/// Forward compact bilinear pass with tape; the `q(x) = x` path with no
/// weight computation to differentiate through.
pub fn forward_compact_with_tape<'a>(
    x: &LocalFeatureSet,
    cfg: &'a SketchConfig,
) -> Result<(PooledFeature, Tape<'a>)> {
    let parts = pooled_sum_parts(cfg, x, None, 0.0)?;
    let feature = PooledFeature {
        data: parts.data.clone(),
        meta: PoolMeta {
            kind: cfg.kind(),
            seed: cfg.seed(),
            pipeline: "compact_bilinear".to_string(),
        },
    };
    let tape = Tape {
        cfg,
        original: x.clone(),
        preprocess: Preprocess::None,
        xp: x.clone(),
        weights: TapeWeights::Identity,
        p1: parts.p1,
        p2: parts.p2,
        weighted: parts.weighted,
        output: parts.data,
        k: 0,
    };
    Ok((feature, tape))
}

/// Vector–Jacobian product: the gradient of `<upstream, output>` with
/// respect to the original d-by-n descriptor matrix.
pub fn vjp(tape: &Tape<'_>, upstream: &[f64]) -> Result<Matrix> {
    Ok(pullback(tape, upstream)?.input_gradient)
}

struct Pullback {
    input_gradient: Matrix,
    gram_cotangent: Option<Matrix>,
}

fn pullback(tape: &Tape<'_>, upstream: &[f64]) -> Result<Pullback> {
    let cfg = tape.cfg;
    let dim = cfg.output_dim();
    if upstream.len() != dim || !upstream.iter().all(|v| v.is_finite()) {
        return Err(Error::TapeMismatch);
    }
    let n = tape.xp.len();
    let dp = tape.xp.dim();

    // pair combiner: the cotangent factor is shared across columns
    let ct = pair_cotangent(cfg, upstream)?;
    let (g_weighted, g_p2) = pair_columns_pullback(&ct, &tape.weighted, &tape.p2);

    // weighted projection: both factors
    let (g_p1, g_w) = match &tape.weights {
        TapeWeights::Identity => (g_weighted, None),
        TapeWeights::NewtonSchulz { weights, .. } => {
            let g_p1 = g_weighted.mul_weights(&weights.transpose());
            let g_w = real_adjoint_product(&tape.p1, &g_weighted);
            (g_p1, Some(g_w))
        }
    };

    // projections back to descriptor space
    let mut g_xp = Matrix::zeros(dp, n);
    add_projection_pullback(cfg, Side::First, &g_p1, &mut g_xp)?;
    add_projection_pullback(cfg, Side::Second, &g_p2, &mut g_xp)?;

    // iteration, trace normalization, Gram map
    let mut gram_cotangent = None;
    if let (
        Some(g_w),
        TapeWeights::NewtonSchulz {
            gram: s,
            trace,
            states,
            ..
        },
    ) = (g_w, &tape.weights)
    {
        let sqrt_tr = trace.sqrt();
        let (_, z_k) = states.last().expect("at least the initial state");
        let mut trace_bar =
            -0.5 / (trace * sqrt_tr) * frobenius_inner_raw(&g_w, z_k);

        let mut g_y = Matrix::zeros(n, n);
        let mut g_z = g_w.scale(1.0 / sqrt_tr);
        for (y, z) in states[..states.len() - 1].iter().rev() {
            let yt = y.transpose();
            let zt = z.transpose();
            // Y' = (3 Y - Y Z Y) / 2 ; Z' = (3 Z - Z Y Z) / 2
            let mut g_y_prev = g_y.scale(3.0);
            g_y_prev.axpy(-1.0, &g_y.matmul(&yt).matmul(&zt));
            g_y_prev.axpy(-1.0, &zt.matmul(&yt).matmul(&g_y));
            g_y_prev.axpy(-1.0, &zt.matmul(&g_z).matmul(&zt));
            let mut g_z_prev = g_z.scale(3.0);
            g_z_prev.axpy(-1.0, &g_z.matmul(&zt).matmul(&yt));
            g_z_prev.axpy(-1.0, &yt.matmul(&zt).matmul(&g_z));
            g_z_prev.axpy(-1.0, &yt.matmul(&g_y).matmul(&yt));
            g_y = g_y_prev.scale(0.5);
            g_z = g_z_prev.scale(0.5);
        }
        // Y_0 = A = S / trace(S); Z_0 = I contributes nothing
        let g_a = g_y;
        trace_bar -= frobenius_inner_raw(&g_a, s) / (trace * trace);
        let mut g_s = g_a.scale(1.0 / trace);
        for i in 0..n {
            let v = g_s.get(i, i) + trace_bar;
            g_s.set(i, i, v);
        }

        // Gram map: dX <- X (dS + dS^t)
        let sym = g_s.add(&g_s.transpose());
        g_xp = g_xp.add(&tape.xp.to_matrix().matmul(&sym));
        gram_cotangent = Some(g_s);
    }

    // preprocessing
    let input_gradient = match tape.preprocess {
        Preprocess::None => g_xp,
        Preprocess::Center => {
            let scale = 1.0 / (n as f64).sqrt();
            let mut out = Matrix::zeros(dp, n);
            for i in 0..dp {
                let mean: f64 = (0..n).map(|j| g_xp.get(i, j)).sum::<f64>() / n as f64;
                for j in 0..n {
                    out.set(i, j, (g_xp.get(i, j) - mean) * scale);
                }
            }
            out
        }
        Preprocess::Gaussian => {
            let d = dp - 1;
            let scale = 1.0 / (n as f64).sqrt();
            Matrix::from_fn(d, n, |i, j| g_xp.get(i, j) * scale)
        }
    };
    Ok(Pullback {
        input_gradient,
        gram_cotangent,
    })
}

/// Pullback of the columnwise pair combination: gradients with respect to
/// the weighted first-side matrix and the second-side matrix.
fn pair_columns_pullback(
    ct: &PairCotangent,
    weighted: &SketchedMatrix,
    p2: &SketchedMatrix,
) -> (SketchedMatrix, SketchedMatrix) {
    let dim = weighted.dim();
    let n = weighted.n();
    match ct {
        PairCotangent::Complex(ct) => {
            let mut gm = Vec::with_capacity(dim * n);
            let mut gp2 = Vec::with_capacity(dim * n);
            for j in 0..n {
                let a = weighted.complex_col(j);
                let b = p2.complex_col(j);
                gm.extend(ct.iter().zip(b).map(|(c, x)| c * x.conj()));
                gp2.extend(ct.iter().zip(a).map(|(c, x)| c * x.conj()));
            }
            (
                SketchedMatrix::from_parts(
                    SketchData::Complex(gm),
                    dim,
                    n,
                    weighted.origin(),
                    weighted.config_id(),
                ),
                SketchedMatrix::from_parts(
                    SketchData::Complex(gp2),
                    dim,
                    n,
                    p2.origin(),
                    p2.config_id(),
                ),
            )
        }
        PairCotangent::Real(ct) => {
            let mut gm = Vec::with_capacity(dim * n);
            let mut gp2 = Vec::with_capacity(dim * n);
            for j in 0..n {
                let a = weighted.real_col(j);
                let b = p2.real_col(j);
                gm.extend(ct.iter().zip(b).map(|(c, x)| c * x));
                gp2.extend(ct.iter().zip(a).map(|(c, x)| c * x));
            }
            (
                SketchedMatrix::from_parts(
                    SketchData::Real(gm),
                    dim,
                    n,
                    weighted.origin(),
                    weighted.config_id(),
                ),
                SketchedMatrix::from_parts(
                    SketchData::Real(gp2),
                    dim,
                    n,
                    p2.origin(),
                    p2.config_id(),
                ),
            )
        }
    }
}

fn add_projection_pullback(
    cfg: &SketchConfig,
    side: Side,
    g: &SketchedMatrix,
    out: &mut Matrix,
) -> Result<()> {
    for j in 0..g.n() {
        let col = if g.is_complex() {
            project_pullback_complex(cfg, side, g.complex_col(j))?
        } else {
            project_pullback_real(cfg, side, g.real_col(j))
        };
        for (i, v) in col.iter().enumerate() {
            let cur = out.get(i, j) + v;
            out.set(i, j, cur);
        }
    }
    Ok(())
}

/// A feature map paired with its reverse-mode derivative, as needed by the
/// finite-difference check.
pub trait DifferentiableFeature {
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &LocalFeatureSet) -> Result<Vec<f64>>;
    fn vjp_at(&self, x: &LocalFeatureSet, upstream: &[f64]) -> Result<Matrix>;
}

/// Square-root pooling pipeline as a differentiable feature.
pub struct IpccpPipeline<'a> {
    pub cfg: &'a SketchConfig,
    pub k: usize,
    pub preprocess: Preprocess,
}

impl DifferentiableFeature for IpccpPipeline<'_> {
    fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    fn eval(&self, x: &LocalFeatureSet) -> Result<Vec<f64>> {
        Ok(crate::pooling::ipccp(x, self.cfg, self.k, self.preprocess)?.data)
    }

    fn vjp_at(&self, x: &LocalFeatureSet, upstream: &[f64]) -> Result<Matrix> {
        let (_, tape) = forward_with_tape(x, self.cfg, self.k, self.preprocess)?;
        vjp(&tape, upstream)
    }
}

/// Plain compact bilinear pooling as a differentiable feature.
pub struct CompactBilinearPipeline<'a> {
    pub cfg: &'a SketchConfig,
}

impl DifferentiableFeature for CompactBilinearPipeline<'_> {
    fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    fn eval(&self, x: &LocalFeatureSet) -> Result<Vec<f64>> {
        Ok(crate::pooling::compact_bilinear(x, self.cfg)?.data)
    }

    fn vjp_at(&self, x: &LocalFeatureSet, upstream: &[f64]) -> Result<Matrix> {
        let (_, tape) = forward_compact_with_tape(x, self.cfg)?;
        vjp(&tape, upstream)
    }
}

/// Central-difference directional-derivative check.
///
/// For each probe draws a random unit direction `u` in descriptor space and
/// a random upstream `v`, and compares
/// `<v, (f(X + eps u) - f(X - eps u)) / (2 eps)>` against `<vjp(v), u>`.
/// Returns the worst relative discrepancy.
pub fn finite_diff_check(
    f: &dyn DifferentiableFeature,
    x: &LocalFeatureSet,
    eps: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    assert!(eps > 0.0, "step size must be positive");
    let d = x.dim();
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut u: Vec<f64> = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in u.iter_mut() {
            *v /= norm;
        }
        let v: Vec<f64> = (0..f.output_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();

        let shift = |sign: f64| -> Result<Vec<f64>> {
            let data: Vec<f64> = x
                .as_slice()
                .iter()
                .zip(&u)
                .map(|(a, b)| a + sign * eps * b)
                .collect();
            f.eval(&LocalFeatureSet::new(d, n, data)?)
        };
        let plus = shift(1.0)?;
        let minus = shift(-1.0)?;
        let fd: f64 = v
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(vj, (p, m))| vj * (p - m))
            .sum::<f64>()
            / (2.0 * eps);

        let grad = f.vjp_at(x, &v)?;
        let ad: f64 = grad
            .as_slice()
            .iter()
            .enumerate()
            // grad is d-by-n row-major; u is descriptor-contiguous
            .map(|(idx, g)| {
                let (i, j) = (idx / n, idx % n);
                g * u[j * d + i]
            })
            .sum();

        let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
