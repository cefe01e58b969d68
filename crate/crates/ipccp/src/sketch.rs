//! Randomized pair sketches: tensor sketch and random Maclaurin.
//!
//! Both realize the same contract behind one bilinear combiner: projecting a
//! descriptor twice (two independent parameter draws) and combining a pair of
//! projections yields a D-dimensional feature whose inner products match the
//! inner products of descriptor outer products in expectation.
//!
//! Tensor sketch projections are stored post-DFT, so combining a pair is an
//! entrywise spectral product followed by one inverse transform, and weighting
//! columns (a linear operation) commutes with the stored representation.

use std::sync::OnceLock;

use num_complex::Complex64;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft;
use crate::matrix::Matrix;

/// Which approximation family a config realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchKind {
    TensorSketch,
    RandomMaclaurin,
}

/// Which of the two independent projections produced a sketched value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

// Parameter-role stream ids for the counter-based generator.
const STREAM_H1: u64 = 1;
const STREAM_S1: u64 = 2;
const STREAM_H2: u64 = 3;
const STREAM_S2: u64 = 4;
const STREAM_W1: u64 = 5;
const STREAM_W2: u64 = 6;

#[derive(Debug, Clone)]
enum SketchParams {
    Tensor {
        h1: Vec<usize>,
        s1: Vec<f64>,
        h2: Vec<usize>,
        s2: Vec<f64>,
    },
    /// Projection matrices are stored transposed (d rows of length D) so a
    /// projection is d contiguous axpy passes instead of D short dots.
    Maclaurin {
        w1_t: Matrix,
        w2_t: Matrix,
    },
}

/// One realized parameter draw: hash/sign pairs for the tensor sketch or a
/// pair of signed projection matrices for random Maclaurin.
///
/// Parameters are expanded deterministically from the seed with ChaCha8, one
/// counter stream per parameter role, so the draw is reproducible and
/// independent of generation order.
#[derive(Debug, Clone)]
pub struct SketchConfig {
    kind: SketchKind,
    d: usize,
    dim: usize,
    seed: u64,
    id: u64,
    params: SketchParams,
    identity_sum: OnceLock<Vec<f64>>,
}

impl SketchConfig {
    /// `d` is the descriptor dimension, `dim` the sketch output dimension.
    /// Tensor sketch requires `dim` to be a power of two.
    pub fn new(kind: SketchKind, d: usize, dim: usize, seed: u64) -> Result<Self> {
        if d == 0 || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if kind == SketchKind::TensorSketch && !dim.is_power_of_two() {
            return Err(Error::BadDimension { dim });
        }
        let params = match kind {
            SketchKind::TensorSketch => SketchParams::Tensor {
                h1: draw_hashes(seed, STREAM_H1, d, dim),
                s1: draw_signs(seed, STREAM_S1, d),
                h2: draw_hashes(seed, STREAM_H2, d, dim),
                s2: draw_signs(seed, STREAM_S2, d),
            },
            SketchKind::RandomMaclaurin => SketchParams::Maclaurin {
                w1_t: draw_sign_matrix(seed, STREAM_W1, d, dim),
                w2_t: draw_sign_matrix(seed, STREAM_W2, d, dim),
            },
        };
        Ok(Self {
            kind,
            d,
            dim,
            seed,
            id: config_fingerprint(kind, d, dim, seed),
            params,
            identity_sum: OnceLock::new(),
        })
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(crate) fn hashes(&self, side: Side) -> &[usize] {
        match (&self.params, side) {
            (SketchParams::Tensor { h1, .. }, Side::First) => h1,
            (SketchParams::Tensor { h2, .. }, Side::Second) => h2,
            _ => panic!("hashes only exist for tensor sketch"),
        }
    }

    pub(crate) fn signs(&self, side: Side) -> &[f64] {
        match (&self.params, side) {
            (SketchParams::Tensor { s1, .. }, Side::First) => s1,
            (SketchParams::Tensor { s2, .. }, Side::Second) => s2,
            _ => panic!("signs only exist for tensor sketch"),
        }
    }

    /// Transposed projection matrix (d-by-D): row `i` holds the signs that
    /// coordinate `i` contributes across the sketch dimensions.
    pub(crate) fn projection_t(&self, side: Side) -> &Matrix {
        match (&self.params, side) {
            (SketchParams::Maclaurin { w1_t, .. }, Side::First) => w1_t,
            (SketchParams::Maclaurin { w2_t, .. }, Side::Second) => w2_t,
            _ => panic!("projection matrices only exist for random Maclaurin"),
        }
    }

    /// `sum_i pair_feature(psi1(e_i), psi2(e_i))` over the `d` basis vectors.
    /// Input-independent, so computed once per config; the bias vector of the
    /// polynomial pooling is this sum scaled by the bias coefficient.
    pub fn identity_pair_sum(&self) -> &[f64] {
        self.identity_sum.get_or_init(|| {
            let mut acc = vec![0.0; self.dim];
            let mut e = vec![0.0; self.d];
            for i in 0..self.d {
                e[i] = 1.0;
                let a = project(self, Side::First, &e).expect("basis vector projects");
                let b = project(self, Side::Second, &e).expect("basis vector projects");
                let pf = pair_feature(self, &a, &b).expect("matching config");
                for (acc_j, p_j) in acc.iter_mut().zip(&pf) {
                    *acc_j += p_j;
                }
                e[i] = 0.0;
            }
            acc
        })
    }

    #[cfg(test)]
    fn with_tensor_params(
        d: usize,
        dim: usize,
        h1: Vec<usize>,
        s1: Vec<f64>,
        h2: Vec<usize>,
        s2: Vec<f64>,
    ) -> Self {
        Self {
            kind: SketchKind::TensorSketch,
            d,
            dim,
            seed: 0,
            id: config_fingerprint(SketchKind::TensorSketch, d, dim, 0),
            params: SketchParams::Tensor { h1, s1, h2, s2 },
            identity_sum: OnceLock::new(),
        }
    }
}

fn role_rng(seed: u64, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role);
    rng
}

/// Uniform bucket indices. The paper-facing convention is 1-based in
/// `{1..D}`; storage is 0-based with the shift applied here.
fn draw_hashes(seed: u64, role: u64, d: usize, dim: usize) -> Vec<usize> {
    let mut rng = role_rng(seed, role);
    (0..d).map(|_| rng.random_range(0..dim)).collect()
}

fn draw_signs(seed: u64, role: u64, d: usize) -> Vec<f64> {
    let mut rng = role_rng(seed, role);
    (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

fn draw_sign_matrix(seed: u64, role: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = role_rng(seed, role);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    Matrix::from_rows(rows, cols, data)
}

fn config_fingerprint(kind: SketchKind, d: usize, dim: usize, seed: u64) -> u64 {
    let k = match kind {
        SketchKind::TensorSketch => 1u64,
        SketchKind::RandomMaclaurin => 2u64,
    };
    let mut z = seed
        .wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((d as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((dim as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Payload of a sketched vector: spectral-domain complex for tensor sketch,
/// real for random Maclaurin.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// A single projected descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchedVector {
    data: SketchData,
    origin: Side,
    config_id: u64,
}

impl SketchedVector {
    pub fn data(&self) -> &SketchData {
        &self.data
    }

    pub fn origin(&self) -> Side {
        self.origin
    }

    pub fn len(&self) -> usize {
        match &self.data {
            SketchData::Real(v) => v.len(),
            SketchData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Projects one descriptor: count sketch followed by a forward DFT for the
/// tensor sketch, or a signed random projection for random Maclaurin.
/// Linear in `x`.
pub fn project(cfg: &SketchConfig, side: Side, x: &[f64]) -> Result<SketchedVector> {
    if x.len() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            actual: x.len(),
        });
    }
    let data = match cfg.kind {
        SketchKind::TensorSketch => {
            let mut buckets = vec![0.0; cfg.dim];
            count_sketch_into(x, cfg.hashes(side), cfg.signs(side), &mut buckets);
            SketchData::Complex(fft::dft_real(&buckets)?)
        }
        SketchKind::RandomMaclaurin => {
            let mut out = vec![0.0; cfg.dim];
            sign_project_into(cfg.projection_t(side), x, &mut out);
            SketchData::Real(out)
        }
    };
    Ok(SketchedVector {
        data,
        origin: side,
        config_id: cfg.id,
    })
}

/// `out = W x` with `W` given transposed: accumulate `x_i * row_i(W^t)`.
fn sign_project_into(w_t: &Matrix, x: &[f64], out: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(w_t.row(i)) {
            *o += xi * w;
        }
    }
}

pub(crate) fn count_sketch_into<T: Float>(x: &[T], h: &[usize], s: &[T], out: &mut [T]) {
    for ((&xi, &hi), &si) in x.iter().zip(h).zip(s) {
        out[hi] = out[hi] + si * xi;
    }
}

/// Combines a first-side and a second-side projection into the real
/// D-dimensional pair feature. Bilinear in `(a, b)`.
///
/// Tensor sketch: inverse DFT of the entrywise spectral product; the result
/// of combining real inputs is real, so the imaginary residue is asserted
/// small and dropped. Random Maclaurin: entrywise product scaled by
/// `1/sqrt(D)`.
pub fn pair_feature(
    cfg: &SketchConfig,
    a: &SketchedVector,
    b: &SketchedVector,
) -> Result<Vec<f64>> {
    check_pair(cfg, a, b)?;
    match (&a.data, &b.data) {
        (SketchData::Complex(av), SketchData::Complex(bv)) => {
            let prod: Vec<Complex64> = av.iter().zip(bv).map(|(x, y)| x * y).collect();
            Ok(spectral_combine(&prod)?)
        }
        (SketchData::Real(av), SketchData::Real(bv)) => {
            let scale = 1.0 / (cfg.dim as f64).sqrt();
            Ok(av.iter().zip(bv).map(|(x, y)| x * y * scale).collect())
        }
        _ => Err(Error::ConfigMismatch),
    }
}

fn check_pair(cfg: &SketchConfig, a: &SketchedVector, b: &SketchedVector) -> Result<()> {
    if a.config_id != cfg.id
        || b.config_id != cfg.id
        || a.origin != Side::First
        || b.origin != Side::Second
    {
        return Err(Error::ConfigMismatch);
    }
    Ok(())
}

/// Inverse DFT of a spectral product and projection to the real part.
pub(crate) fn spectral_combine(prod: &[Complex64]) -> Result<Vec<f64>> {
    let out = fft::idft(prod)?;
    let total: f64 = out.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let imag: f64 = out.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    assert!(
        imag <= 1e-8 * total + 1e-300,
        "imaginary residue {imag:e} exceeds 1e-8 of norm {total:e}"
    );
    Ok(out.iter().map(|c| c.re).collect())
}

/// All descriptors of a set projected on one side, stored column-contiguous.
#[derive(Debug, Clone)]
pub struct SketchedMatrix {
    data: SketchData,
    dim: usize,
    n: usize,
    origin: Side,
    config_id: u64,
}

impl SketchedMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> Side {
        self.origin
    }

    /// Copy of column `j` as a standalone sketched vector.
    pub fn column(&self, j: usize) -> SketchedVector {
        let data = match &self.data {
            SketchData::Real(v) => {
                SketchData::Real(v[j * self.dim..(j + 1) * self.dim].to_vec())
            }
            SketchData::Complex(v) => {
                SketchData::Complex(v[j * self.dim..(j + 1) * self.dim].to_vec())
            }
        };
        SketchedVector {
            data,
            origin: self.origin,
            config_id: self.config_id,
        }
    }

    pub(crate) fn real_col(&self, j: usize) -> &[f64] {
        match &self.data {
            SketchData::Real(v) => &v[j * self.dim..(j + 1) * self.dim],
            SketchData::Complex(_) => panic!("real column on complex sketch"),
        }
    }

    pub(crate) fn complex_col(&self, j: usize) -> &[Complex64] {
        match &self.data {
            SketchData::Complex(v) => &v[j * self.dim..(j + 1) * self.dim],
            SketchData::Real(_) => panic!("complex column on real sketch"),
        }
    }

    pub(crate) fn is_complex(&self) -> bool {
        matches!(self.data, SketchData::Complex(_))
    }

    pub(crate) fn config_id(&self) -> u64 {
        self.config_id
    }

    pub(crate) fn from_parts(
        data: SketchData,
        dim: usize,
        n: usize,
        origin: Side,
        config_id: u64,
    ) -> Self {
        Self {
            data,
            dim,
            n,
            origin,
            config_id,
        }
    }

    /// Right-multiplies by a real weight matrix: column `c` of the result is
    /// `sum_m w[m][c] * column_m`. Valid for the spectral representation too
    /// because the DFT is linear.
    pub fn mul_weights(&self, w: &Matrix) -> SketchedMatrix {
        assert_eq!(w.rows(), self.n, "weight rows must equal column count");
        let n_out = w.cols();
        let data = match &self.data {
            SketchData::Real(v) => {
                let mut out = vec![0.0; self.dim * n_out];
                for c in 0..n_out {
                    let out_col = &mut out[c * self.dim..(c + 1) * self.dim];
                    for m in 0..self.n {
                        let coef = w.get(m, c);
                        if coef == 0.0 {
                            continue;
                        }
                        let col = &v[m * self.dim..(m + 1) * self.dim];
                        for (o, &x) in out_col.iter_mut().zip(col) {
                            *o += coef * x;
                        }
                    }
                }
                SketchData::Real(out)
            }
            SketchData::Complex(v) => {
                let mut out = vec![Complex64::new(0.0, 0.0); self.dim * n_out];
                for c in 0..n_out {
                    let out_col = &mut out[c * self.dim..(c + 1) * self.dim];
                    for m in 0..self.n {
                        let coef = w.get(m, c);
                        if coef == 0.0 {
                            continue;
                        }
                        let col = &v[m * self.dim..(m + 1) * self.dim];
                        for (o, &x) in out_col.iter_mut().zip(col) {
                            *o += x.scale(coef);
                        }
                    }
                }
                SketchData::Complex(out)
            }
        };
        SketchedMatrix {
            data,
            dim: self.dim,
            n: n_out,
            origin: self.origin,
            config_id: self.config_id,
        }
    }
}

/// Projects every descriptor of `x` on the given side.
pub fn project_all(
    cfg: &SketchConfig,
    side: Side,
    x: &crate::matrix::LocalFeatureSet,
) -> Result<SketchedMatrix> {
    if x.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            actual: x.dim(),
        });
    }
    let n = x.len();
    let data = match cfg.kind {
        SketchKind::TensorSketch => {
            let mut out = Vec::with_capacity(cfg.dim * n);
            for j in 0..n {
                let mut buckets = vec![0.0; cfg.dim];
                count_sketch_into(x.descriptor(j), cfg.hashes(side), cfg.signs(side), &mut buckets);
                out.extend(fft::dft_real(&buckets)?);
            }
            SketchData::Complex(out)
        }
        SketchKind::RandomMaclaurin => {
            let w_t = cfg.projection_t(side);
            let mut out = vec![0.0; cfg.dim * n];
            for j in 0..n {
                let col = &mut out[j * cfg.dim..(j + 1) * cfg.dim];
                sign_project_into(w_t, x.descriptor(j), col);
            }
            SketchData::Real(out)
        }
    };
    Ok(SketchedMatrix {
        data,
        dim: cfg.dim,
        n,
        origin: side,
        config_id: cfg.id,
    })
}

// ---------------------------------------------------------------------------
// Adjoints of the sketch stages, used by the reverse-mode pullback.
// Inner products on complex vectors are the real ones, Re(conj(u) . v).
// ---------------------------------------------------------------------------

/// Cotangent of the pair combiner for a real upstream vector `v`: the shared
/// factor such that the gradients in `a` and `b` are its entrywise products
/// with the conjugated partner.
#[derive(Debug, Clone)]
pub(crate) enum PairCotangent {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

pub(crate) fn pair_cotangent(cfg: &SketchConfig, v: &[f64]) -> Result<PairCotangent> {
    match cfg.kind {
        SketchKind::TensorSketch => {
            // adjoint of (Re . idft) is (1/N) dft of the real embedding
            let spectrum = fft::dft_real(v)?;
            let scale = 1.0 / cfg.dim as f64;
            Ok(PairCotangent::Complex(
                spectrum.into_iter().map(|c| c.scale(scale)).collect(),
            ))
        }
        SketchKind::RandomMaclaurin => {
            let scale = 1.0 / (cfg.dim as f64).sqrt();
            Ok(PairCotangent::Real(v.iter().map(|x| x * scale).collect()))
        }
    }
}

/// Adjoint of `project`: maps a cotangent in sketch space back to descriptor
/// space.
pub(crate) fn project_pullback_complex(
    cfg: &SketchConfig,
    side: Side,
    g: &[Complex64],
) -> Result<Vec<f64>> {
    // adjoint of the forward DFT is N * idft; the count sketch adjoint then
    // reads the signed bucket of each coordinate
    let back = fft::idft(g)?;
    let n = cfg.dim as f64;
    let h = cfg.hashes(side);
    let s = cfg.signs(side);
    Ok((0..cfg.d).map(|i| s[i] * back[h[i]].re * n).collect())
}

pub(crate) fn project_pullback_real(cfg: &SketchConfig, side: Side, g: &[f64]) -> Vec<f64> {
    // adjoint of W x is W^t g, a contiguous dot per stored row
    let w_t = cfg.projection_t(side);
    (0..cfg.d)
        .map(|i| crate::matrix::dot(w_t.row(i), g))
        .collect()
}

/// `Re(P^H G)` for two equally-shaped sketched matrices: the real matrix of
/// column-pair inner products, which is the weight-matrix cotangent.
pub(crate) fn real_adjoint_product(p: &SketchedMatrix, g: &SketchedMatrix) -> Matrix {
    assert_eq!(p.dim, g.dim);
    let mut out = Matrix::zeros(p.n, g.n);
    if p.is_complex() {
        for m in 0..p.n {
            let pm = p.complex_col(m);
            for c in 0..g.n {
                let gc = g.complex_col(c);
                let v: f64 = pm.iter().zip(gc).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
                out.set(m, c, v);
            }
        }
    } else {
        for m in 0..p.n {
            let pm = p.real_col(m);
            for c in 0..g.n {
                let v = crate::matrix::dot(pm, g.real_col(c));
                out.set(m, c, v);
            }
        }
    }
    out
}
