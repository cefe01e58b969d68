//! Pooling operators: exact bilinear baselines, compact sketched bilinear
//! pooling, the general polynomial-of-covariance sketch, and the square-root
//! variant that weighs pair sketches with Newton–Schulz iterates.

use crate::error::{Error, Result};
use crate::matrix::{covariance_feature, gram, poly_eval_matrix, LocalFeatureSet, Matrix, SymmetricMatrix};
use crate::newton_schulz::{ns_iterate, sqrt_weights};
use crate::sketch::{pair_feature, project, project_all, SketchConfig, SketchedMatrix, Side};

/// Input substitution applied before pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    /// Use the descriptors as given (plain bilinear feature).
    None,
    /// Center and scale so the bilinear feature becomes the covariance.
    Center,
    /// Append a constant coordinate and scale (Gaussian-embedding style);
    /// output dimension is `d + 1`.
    Gaussian,
}

impl std::fmt::Display for Preprocess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Preprocess::None => "none",
            Preprocess::Center => "center",
            Preprocess::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

/// Polynomial `q(x) = bias + x * r(x)` with `r` given by ascending
/// coefficients. Every polynomial decomposes this way: the bias is its
/// constant term and `r` collects the higher-degree terms divided by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSpec {
    pub bias: f64,
    pub r_coeffs: Vec<f64>,
}

impl PolynomialSpec {
    pub fn new(bias: f64, r_coeffs: Vec<f64>) -> Self {
        assert!(bias.is_finite() && r_coeffs.iter().all(|c| c.is_finite()));
        Self { bias, r_coeffs }
    }

    /// `q(x) = x`.
    pub fn identity() -> Self {
        Self::new(0.0, vec![1.0])
    }

    /// `q(x) = x^m` for `m >= 1`, or the constant 1 for `m = 0`.
    pub fn monomial(m: usize) -> Self {
        if m == 0 {
            return Self::new(1.0, vec![]);
        }
        let mut r = vec![0.0; m];
        r[m - 1] = 1.0;
        Self::new(0.0, r)
    }

    /// From full ascending coefficients of `q` itself.
    pub fn from_q_coeffs(coeffs: &[f64]) -> Self {
        let bias = coeffs.first().copied().unwrap_or(0.0);
        Self::new(bias, coeffs.get(1..).unwrap_or(&[]).to_vec())
    }

    /// Ascending coefficients of `q`.
    pub fn q_coeffs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.r_coeffs.len() + 1);
        out.push(self.bias);
        out.extend_from_slice(&self.r_coeffs);
        out
    }

    fn is_plain_identity(&self) -> bool {
        self.r_coeffs == [1.0]
    }
}

/// How a pooled feature was produced; carried for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMeta {
    pub kind: crate::sketch::SketchKind,
    pub seed: u64,
    pub pipeline: String,
}

/// A D-dimensional pooled feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature {
    pub data: Vec<f64>,
    pub meta: PoolMeta,
}

/// Replaces each descriptor by `(x_n - mean) / sqrt(n)` so that the bilinear
/// feature of the output is the covariance of the input.
pub fn center_features(x: &LocalFeatureSet) -> LocalFeatureSet {
    let d = x.dim();
    let n = x.len();
    let mut mean = vec![0.0; d];
    for j in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.descriptor(j)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut data = Vec::with_capacity(d * n);
    for j in 0..n {
        data.extend(
            x.descriptor(j)
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * scale),
        );
    }
    LocalFeatureSet::new(d, n, data).expect("centering preserves validity")
}

/// Appends a constant coordinate 1 and scales by `1/sqrt(n)`; the bilinear
/// feature of the output carries first- and second-order moments in a
/// `(d+1) x (d+1)` block layout.
pub fn gaussian_embed(x: &LocalFeatureSet) -> LocalFeatureSet {
    let d = x.dim();
    let n = x.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut data = Vec::with_capacity((d + 1) * n);
    for j in 0..n {
        data.extend(x.descriptor(j).iter().map(|v| v * scale));
        data.push(scale);
    }
    LocalFeatureSet::new(d + 1, n, data).expect("embedding preserves validity")
}

pub fn apply_preprocess(x: &LocalFeatureSet, pre: Preprocess) -> LocalFeatureSet {
    match pre {
        Preprocess::None => x.clone(),
        Preprocess::Center => center_features(x),
        Preprocess::Gaussian => gaussian_embed(x),
    }
}

/// Everything a forward pooled sum computes; the gradient tape keeps the
/// sketched intermediates.
pub(crate) struct PooledParts {
    pub data: Vec<f64>,
    pub p1: SketchedMatrix,
    pub p2: SketchedMatrix,
    pub weighted: SketchedMatrix,
}

/// Shared pooled-sum core: `bias`-scaled identity term plus
/// `sum_{n1} pair((Psi1 W)_{:,n1}, psi2(x_{n1}))`, with `W = None` meaning
/// identity weights. Summation order over `n1` is fixed ascending; that
/// ordering is part of the reproducibility contract.
pub(crate) fn pooled_sum(
    cfg: &SketchConfig,
    x: &LocalFeatureSet,
    weights: Option<&Matrix>,
    bias: f64,
) -> Result<Vec<f64>> {
    Ok(pooled_sum_parts(cfg, x, weights, bias)?.data)
}

pub(crate) fn pooled_sum_parts(
    cfg: &SketchConfig,
    x: &LocalFeatureSet,
    weights: Option<&Matrix>,
    bias: f64,
) -> Result<PooledParts> {
    if x.dim() != cfg.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.input_dim(),
            actual: x.dim(),
        });
    }
    if let Some(w) = weights {
        if w.rows() != x.len() || w.cols() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: w.rows().max(w.cols()),
            });
        }
    }
    let p1 = project_all(cfg, Side::First, x)?;
    let p2 = project_all(cfg, Side::Second, x)?;
    let weighted = match weights {
        Some(w) => p1.mul_weights(w),
        None => p1.clone(),
    };

    let dim = cfg.output_dim();
    let mut acc = vec![0.0; dim];
    if bias != 0.0 {
        for (a, c) in acc.iter_mut().zip(cfg.identity_pair_sum()) {
            *a = bias * c;
        }
    }
    accumulate_pairs(cfg, &weighted, &p2, &mut acc)?;
    Ok(PooledParts {
        data: acc,
        p1,
        p2,
        weighted,
    })
}

/// Adds `sum_j pair(m_col_j, p2_col_j)` into `acc`, ascending `j`.
pub(crate) fn accumulate_pairs(
    cfg: &SketchConfig,
    m: &SketchedMatrix,
    p2: &SketchedMatrix,
    acc: &mut [f64],
) -> Result<()> {
    if m.config_id() != p2.config_id() || m.n() != p2.n() {
        return Err(Error::ConfigMismatch);
    }
    if m.is_complex() {
        for j in 0..m.n() {
            let prod: Vec<num_complex::Complex64> = m
                .complex_col(j)
                .iter()
                .zip(p2.complex_col(j))
                .map(|(a, b)| a * b)
                .collect();
            let real = crate::sketch::spectral_combine(&prod)?;
            for (a, r) in acc.iter_mut().zip(&real) {
                *a += r;
            }
        }
    } else {
        let scale = 1.0 / (cfg.output_dim() as f64).sqrt();
        for j in 0..m.n() {
            let mj = m.real_col(j);
            let pj = p2.real_col(j);
            for ((a, &x), &y) in acc.iter_mut().zip(mj).zip(pj) {
                *a += x * y * scale;
            }
        }
    }
    Ok(())
}

/// Plain compact bilinear pooling: `sum_n pair(psi1(x_n), psi2(x_n))`.
/// Identical (bit for bit) to [`poly_pool`] with `q(x) = x`.
pub fn compact_bilinear(x: &LocalFeatureSet, cfg: &SketchConfig) -> Result<PooledFeature> {
    let data = pooled_sum(cfg, x, None, 0.0)?;
    Ok(PooledFeature {
        data,
        meta: PoolMeta {
            kind: cfg.kind(),
            seed: cfg.seed(),
            pipeline: "compact_bilinear".to_string(),
        },
    })
}

/// Sketched approximation of a general polynomial of the bilinear feature.
///
/// Computes the Gram matrix and `W = r(S)` unless `weights` is supplied, adds
/// the bias vector `bias * sum_i pair(psi1(e_i), psi2(e_i))`, and sums the
/// weighted pair features. `q(x) = x` short-circuits the weight product
/// entirely, collapsing to plain compact bilinear pooling.
pub fn poly_pool(
    x: &LocalFeatureSet,
    spec: &PolynomialSpec,
    cfg: &SketchConfig,
    weights: Option<&Matrix>,
) -> Result<PooledFeature> {
    let computed;
    let w = match weights {
        Some(w) => Some(w),
        None if spec.is_plain_identity() => None,
        None => {
            let s = gram(x);
            computed = poly_eval_matrix(&spec.r_coeffs, &s).into_matrix();
            Some(&computed)
        }
    };
    let data = pooled_sum(cfg, x, w, spec.bias)?;
    Ok(PooledFeature {
        data,
        meta: PoolMeta {
            kind: cfg.kind(),
            seed: cfg.seed(),
            pipeline: format!("poly[b={},r={:?}]", spec.bias, spec.r_coeffs),
        },
    })
}

/// Compact pooling of the square-root-normalized second-order feature.
///
/// Applies the preprocessing substitution, derives the pair-sum weights
/// `Z_k / sqrt(trace)` from the Gram matrix, and pools with zero bias. In
/// expectation over seeds the feature inner products match those of
/// `sqrt(trace) * Y_k(C / trace)`, the iterated-square-root feature.
pub fn ipccp(
    x: &LocalFeatureSet,
    cfg: &SketchConfig,
    k: usize,
    preprocess: Preprocess,
) -> Result<PooledFeature> {
    let xp = apply_preprocess(x, preprocess);
    if xp.dim() != cfg.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.input_dim(),
            actual: xp.dim(),
        });
    }
    let (w, _trace) = sqrt_weights(&gram(&xp), k)?;
    let data = pooled_sum(cfg, &xp, Some(&w), 0.0)?;
    Ok(PooledFeature {
        data,
        meta: PoolMeta {
            kind: cfg.kind(),
            seed: cfg.seed(),
            pipeline: format!("ipccp[k={k},pre={preprocess}]"),
        },
    })
}

/// Un-sketched reference feature: `sqrt(trace) * Y_k` from the iteration run
/// on the normalized second-order feature in descriptor space.
///
/// Also evaluates the Gram-space route `X' W X'^t` and asserts the two agree
/// to 1e-10 relative; they are the same polynomial evaluated in different
/// spaces.
pub fn isqrt_cov_exact(
    x: &LocalFeatureSet,
    k: usize,
    preprocess: Preprocess,
) -> Result<SymmetricMatrix> {
    let xp = apply_preprocess(x, preprocess);
    let c = covariance_feature(&xp);
    let trace = c.trace();
    if trace <= 1e-300 {
        return Err(Error::ZeroTrace);
    }
    let a = SymmetricMatrix::from_symmetrized(&c.scale(1.0 / trace));
    let state = ns_iterate(&a, k)?;
    let reference = state.y().scale(trace.sqrt());

    let (w, _) = sqrt_weights(&gram(&xp), k)?;
    let xm = xp.to_matrix();
    let gram_route = xm.matmul(&w).matmul(&xm.transpose());
    let rel = gram_route.sub(&reference).frobenius_norm()
        / reference.frobenius_norm().max(1e-300);
    assert!(
        rel <= 1e-10,
        "gram-space and descriptor-space routes disagree: rel {rel:e}"
    );

    Ok(SymmetricMatrix::from_symmetrized(&reference))
}

/// The n-th basis pair feature used by the bias vector; exposed for tests.
pub fn basis_pair_feature(cfg: &SketchConfig, i: usize) -> Result<Vec<f64>> {
    let mut e = vec![0.0; cfg.input_dim()];
    e[i] = 1.0;
    let a = project(cfg, Side::First, &e)?;
    let b = project(cfg, Side::Second, &e)?;
    pair_feature(cfg, &a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::matrix_sqrt_exact;
    use crate::matrix::frobenius_inner;
    use crate::sketch::SketchKind;
    use rand::{Rng, SeedableRng};

    fn random_set(d: usize, n: usize, seed: u64) -> LocalFeatureSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        LocalFeatureSet::new(d, n, data).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Monte-Carlo mean and standard error over seeds, split across threads
    /// in fixed chunks so the aggregate is deterministic.
    fn mc_mean_se(trials: u64, f: impl Fn(u64) -> f64 + Sync) -> (f64, f64) {
        let chunk = 500u64;
        let chunks: Vec<u64> = (0..trials.div_ceil(chunk)).collect();
        let partials: Vec<(f64, f64)> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .chunks(chunks.len().div_ceil(8).max(1))
                .map(|ids| {
                    let f = &f;
                    s.spawn(move || {
                        ids.iter()
                            .map(|&c| {
                                let lo = c * chunk;
                                let hi = (lo + chunk).min(trials);
                                let mut sum = 0.0;
                                let mut sumsq = 0.0;
                                for t in lo..hi {
                                    let v = f(t);
                                    sum += v;
                                    sumsq += v * v;
                                }
                                (sum, sumsq)
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        let sum: f64 = partials.iter().map(|p| p.0).sum();
        let sumsq: f64 = partials.iter().map(|p| p.1).sum();
        let mean = sum / trials as f64;
        let var = (sumsq - sum * sum / trials as f64) / (trials as f64 - 1.0);
        (mean, (var / trials as f64).sqrt())
    }

    #[test]
    fn centering_single_point_gives_zero() {
        let x = LocalFeatureSet::new(3, 1, vec![1.0, -2.0, 5.0]).unwrap();
        let c = center_features(&x);
        assert!(c.descriptor(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_columns_have_zero_mean() {
        let x = random_set(5, 9, 4);
        let c = center_features(&x);
        for a in 0..5 {
            let mean: f64 = (0..9).map(|j| c.descriptor(j)[a]).sum::<f64>() / 9.0;
            assert!(mean.abs() <= 1e-12);
        }
    }

    #[test]
    fn centered_bilinear_equals_loop_covariance() {
        let x = random_set(4, 7, 12);
        let c = covariance_feature(&center_features(&x));
        // loop oracle: (1/n) sum (x - mean)(x - mean)^t
        let n = 7;
        let mut mean = vec![0.0; 4];
        for j in 0..n {
            for (m, &v) in mean.iter_mut().zip(x.descriptor(j)) {
                *m += v / n as f64;
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                let mut expect = 0.0;
                for j in 0..n {
                    expect += (x.descriptor(j)[a] - mean[a]) * (x.descriptor(j)[b] - mean[b]);
                }
                expect /= n as f64;
                assert!((c.get(a, b) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_embed_single_scalar() {
        let x = LocalFeatureSet::new(1, 1, vec![2.0]).unwrap();
        let g = gaussian_embed(&x);
        assert_eq!(g.dim(), 2);
        assert_eq!(g.descriptor(0), &[2.0, 1.0]);
    }

    #[test]
    fn gaussian_embed_block_structure() {
        let x = random_set(3, 6, 19);
        let g = gaussian_embed(&x);
        let b = covariance_feature(&g);
        let n = 6.0;
        // bottom-right entry is sum_n 1/n = 1
        assert!((b.get(3, 3) - 1.0).abs() <= 1e-12);
        // top-left block is (1/n) sum x x^t; border is (1/n) sum x
        for a in 0..3 {
            let mut sx = 0.0;
            for j in 0..6 {
                sx += x.descriptor(j)[a];
            }
            assert!((b.get(a, 3) - sx / n).abs() <= 1e-12);
            for c in 0..3 {
                let mut sxx = 0.0;
                for j in 0..6 {
                    sxx += x.descriptor(j)[a] * x.descriptor(j)[c];
                }
                assert!((b.get(a, c) - sxx / n).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_column_contributes_nothing() {
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let cfg = SketchConfig::new(kind, 3, 8, 5).unwrap();
            let x = random_set(3, 4, 3);
            let mut with_zero = Vec::new();
            for j in 0..4 {
                with_zero.push(x.descriptor(j).to_vec());
            }
            with_zero.push(vec![0.0; 3]);
            let x_plus = LocalFeatureSet::from_columns(&with_zero).unwrap();
            let a = compact_bilinear(&x, &cfg).unwrap();
            let b = compact_bilinear(&x_plus, &cfg).unwrap();
            for (u, v) in a.data.iter().zip(&b.data) {
                assert!((u - v).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn identity_polynomial_is_bit_consistent_with_compact_bilinear() {
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let cfg = SketchConfig::new(kind, 4, 16, 9).unwrap();
            let x = random_set(4, 5, 21);
            let a = compact_bilinear(&x, &cfg).unwrap();
            let b = poly_pool(&x, &PolynomialSpec::identity(), &cfg, None).unwrap();
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn explicit_identity_weights_match_shortcut() {
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let cfg = SketchConfig::new(kind, 4, 16, 9).unwrap();
            let x = random_set(4, 5, 22);
            let shortcut = poly_pool(&x, &PolynomialSpec::identity(), &cfg, None).unwrap();
            let id = Matrix::identity(5);
            let explicit = poly_pool(&x, &PolynomialSpec::identity(), &cfg, Some(&id)).unwrap();
            for (u, v) in shortcut.data.iter().zip(&explicit.data) {
                assert!((u - v).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn constant_polynomial_ignores_input() {
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let cfg = SketchConfig::new(kind, 4, 8, 13).unwrap();
            let spec = PolynomialSpec::new(2.5, vec![]);
            let a = poly_pool(&random_set(4, 3, 1), &spec, &cfg, None).unwrap();
            let b = poly_pool(&random_set(4, 6, 2), &spec, &cfg, None).unwrap();
            assert_eq!(a.data, b.data);
            // and equals the scaled basis pair sum
            let expect: Vec<f64> = cfg.identity_pair_sum().iter().map(|v| 2.5 * v).collect();
            assert_eq!(a.data, expect);
        }
    }

    #[test]
    fn compact_bilinear_is_unbiased() {
        let x = random_set(8, 6, 61);
        let y = random_set(8, 6, 62);
        let oracle =
            frobenius_inner(&covariance_feature(&x), &covariance_feature(&y)).unwrap();
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let (mean, se) = mc_mean_se(20_000, |t| {
                let cfg = SketchConfig::new(kind, 8, 64, 5000 + t).unwrap();
                let fx = compact_bilinear(&x, &cfg).unwrap();
                let fy = compact_bilinear(&y, &cfg).unwrap();
                dot(&fx.data, &fy.data)
            });
            let z = (mean - oracle) / se;
            assert!(z.abs() < 5.0, "{kind:?}: z = {z:.2}");
        }
    }

    #[test]
    fn squared_polynomial_is_unbiased() {
        let x = random_set(5, 6, 71);
        let y = random_set(5, 6, 72);
        let cx = covariance_feature(&x);
        let cy = covariance_feature(&y);
        let cx2 = SymmetricMatrix::from_symmetrized(&cx.matmul(cx.matrix()));
        let cy2 = SymmetricMatrix::from_symmetrized(&cy.matmul(cy.matrix()));
        let oracle = frobenius_inner(&cx2, &cy2).unwrap();
        let spec = PolynomialSpec::monomial(2);
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let (mean, se) = mc_mean_se(20_000, |t| {
                let cfg = SketchConfig::new(kind, 5, 512, 7000 + t).unwrap();
                let fx = poly_pool(&x, &spec, &cfg, None).unwrap();
                let fy = poly_pool(&y, &spec, &cfg, None).unwrap();
                dot(&fx.data, &fy.data)
            });
            let z = (mean - oracle) / se;
            assert!(z.abs() < 5.0, "{kind:?}: z = {z:.2}");
        }
    }

    #[test]
    fn ipccp_single_unit_descriptor_reduces_to_pair_feature() {
        let mut x0 = vec![0.6, 0.8, 0.0];
        // exactly unit norm
        let norm: f64 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in x0.iter_mut() {
            *v /= norm;
        }
        let x = LocalFeatureSet::new(3, 1, x0).unwrap();
        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let cfg = SketchConfig::new(kind, 3, 8, 15).unwrap();
            let pooled = ipccp(&x, &cfg, 5, Preprocess::None).unwrap();
            let direct = compact_bilinear(&x, &cfg).unwrap();
            for (a, b) in pooled.data.iter().zip(&direct.data) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ipccp_rejects_centered_single_point() {
        let x = LocalFeatureSet::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let cfg = SketchConfig::new(SketchKind::RandomMaclaurin, 3, 8, 1).unwrap();
        assert!(matches!(
            ipccp(&x, &cfg, 5, Preprocess::Center),
            Err(Error::ZeroTrace)
        ));
    }

    #[test]
    fn ipccp_expectation_matches_reference_feature() {
        let x = random_set(8, 10, 81);
        let y = random_set(8, 10, 82);
        let k = 15;
        let mx = isqrt_cov_exact(&x, k, Preprocess::None).unwrap();
        let my = isqrt_cov_exact(&y, k, Preprocess::None).unwrap();
        let oracle = frobenius_inner(&mx, &my).unwrap();

        // the reference itself approximates the exact square-root feature
        let sx = matrix_sqrt_exact(&covariance_feature(&x)).unwrap();
        let sy = matrix_sqrt_exact(&covariance_feature(&y)).unwrap();
        let exact = frobenius_inner(&sx, &sy).unwrap();
        assert!((oracle - exact).abs() <= 1e-3 * exact.abs());

        for kind in [SketchKind::TensorSketch, SketchKind::RandomMaclaurin] {
            let (mean, se) = mc_mean_se(4_000, |t| {
                let cfg = SketchConfig::new(kind, 8, 256, 9000 + t).unwrap();
                let fx = ipccp(&x, &cfg, k, Preprocess::None).unwrap();
                let fy = ipccp(&y, &cfg, k, Preprocess::None).unwrap();
                dot(&fx.data, &fy.data)
            });
            let z = (mean - oracle) / se;
            assert!(z.abs() < 5.0, "{kind:?}: z = {z:.2}");
        }
    }

    #[test]
    fn isqrt_cov_exact_identity_input() {
        let x = LocalFeatureSet::from_columns(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let m = isqrt_cov_exact(&x, 10, Preprocess::None).unwrap();
        let rel = m.sub(&Matrix::identity(3)).frobenius_norm() / (3f64).sqrt();
        assert!(rel <= 1e-10);
    }

    #[test]
    fn isqrt_cov_exact_rank_one_unit() {
        let u = [0.36, 0.48, 0.8]; // unit norm
        let x = LocalFeatureSet::new(3, 1, u.to_vec()).unwrap();
        let m = isqrt_cov_exact(&x, 8, Preprocess::None).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((m.get(a, b) - u[a] * u[b]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn isqrt_cov_exact_approaches_eigen_sqrt() {
        let x = random_set(6, 8, 91);
        let m = isqrt_cov_exact(&x, 20, Preprocess::None).unwrap();
        let s = matrix_sqrt_exact(&covariance_feature(&x)).unwrap();
        let rel = m.sub(s.matrix()).frobenius_norm() / s.frobenius_norm();
        assert!(rel <= 1e-5, "rel {rel:e}");
    }

    #[test]
    fn gram_route_equals_descriptor_route_for_all_k() {
        // the cross-assert inside isqrt_cov_exact enforces 1e-10; run it for
        // every k and all preprocessing modes
        let x = random_set(5, 9, 101);
        for k in 1..=20 {
            for pre in [Preprocess::None, Preprocess::Center, Preprocess::Gaussian] {
                isqrt_cov_exact(&x, k, pre).unwrap();
            }
        }
    }

    #[test]
    fn seed_averaging_commutes_with_batched_sums() {
        let x = random_set(4, 5, 111);
        let y = random_set(4, 5, 112);
        let cfgs: Vec<SketchConfig> = (0..400)
            .map(|t| SketchConfig::new(SketchKind::TensorSketch, 4, 32, t).unwrap())
            .collect();
        let values: Vec<f64> = cfgs
            .iter()
            .map(|cfg| {
                let fx = compact_bilinear(&x, cfg).unwrap();
                let fy = compact_bilinear(&y, cfg).unwrap();
                dot(&fx.data, &fy.data)
            })
            .collect();
        let sequential: f64 = values.iter().sum::<f64>() / values.len() as f64;
        let batched: f64 = values
            .chunks(25)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .sum::<f64>()
            / (values.len() / 25) as f64;
        assert!((sequential - batched).abs() <= 1e-10 * sequential.abs().max(1.0));
    }
}
