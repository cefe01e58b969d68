//! Dense row-major matrices, the symmetric-matrix wrapper, and descriptor sets.
//!
//! Everything in the library core runs in f64; the sketch evaluation kernels
//! have a separate f32 path for timing parity (see [`crate::fp32`]).

use crate::error::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order, order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b_kj) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b_kj;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix::from_rows(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix::from_rows(self.rows, self.cols, data)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * factor).collect();
        Matrix::from_rows(self.rows, self.cols, data)
    }

    /// In-place `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace requires a square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Square matrix guaranteed symmetric at construction.
///
/// The wrapper is read-only; all mutation happens on [`Matrix`] before
/// conversion. `Deref` exposes the full read API of the inner matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(Matrix);

/// Entry-level symmetry tolerance: |a_ij - a_ji| <= SYMMETRY_TOL * max(1, |a_ij|).
pub const SYMMETRY_TOL: f64 = 1e-12;

impl SymmetricMatrix {
    /// Validates symmetry entrywise; rejects non-square or asymmetric input.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                actual: m.cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        for i in 0..m.rows() {
            for j in (i + 1)..m.cols() {
                let a = m.get(i, j);
                let delta = (a - m.get(j, i)).abs();
                if delta > SYMMETRY_TOL * a.abs().max(1.0) {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        delta,
                    });
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds from a nearly-symmetric matrix by averaging `(m + m^t) / 2`.
    pub fn from_symmetrized(m: &Matrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "symmetrize requires a square matrix");
        let n = m.rows();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = 0.5 * (m.get(i, j) + m.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        Self(out)
    }

    pub fn identity(order: usize) -> Self {
        Self(Matrix::identity(order))
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        Self(m)
    }

    pub fn order(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl std::ops::Deref for SymmetricMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// A set of `n` local descriptors of dimension `d`.
///
/// Stored descriptor-contiguous (column-major for the d-by-n matrix view), so
/// `descriptor(j)` is a plain slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeatureSet {
    d: usize,
    n: usize,
    data: Vec<f64>,
}

impl LocalFeatureSet {
    /// `data` holds the descriptors back to back: descriptor `j` occupies
    /// `data[j*d .. (j+1)*d]`.
    pub fn new(d: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if data.len() != d * n {
            return Err(Error::DimensionMismatch {
                expected: d * n,
                actual: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { d, n, data })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let d = columns.first().map(|c| c.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(d * n);
        for c in columns {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Self::new(d, n, data)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    #[inline]
    pub fn descriptor(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The d-by-n matrix whose column `j` is descriptor `j`.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.d, self.n, |i, j| self.data[j * self.d + i])
    }
}

/// Gram matrix of pairwise descriptor inner products, `S_ij = <x_i, x_j>`.
pub fn gram(x: &LocalFeatureSet) -> SymmetricMatrix {
    let n = x.len();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        let xi = x.descriptor(i);
        for j in 0..=i {
            let v = dot(xi, x.descriptor(j));
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    SymmetricMatrix(s)
}

/// Sum of descriptor outer products, the d-by-d second-order feature.
pub fn covariance_feature(x: &LocalFeatureSet) -> SymmetricMatrix {
    let d = x.dim();
    let mut c = Matrix::zeros(d, d);
    for j in 0..x.len() {
        let col = x.descriptor(j);
        for a in 0..d {
            let va = col[a];
            if va == 0.0 {
                continue;
            }
            let row = c.row_mut(a);
            for (b, &vb) in col.iter().enumerate() {
                row[b] += va * vb;
            }
        }
    }
    // exactly symmetric by mirroring the lower triangle
    for a in 0..d {
        for b in 0..a {
            let v = c.get(a, b);
            c.set(b, a, v);
        }
    }
    SymmetricMatrix(c)
}

/// Frobenius inner product `sum_ij A_ij B_ij`.
pub fn frobenius_inner(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    if a.order() != b.order() {
        return Err(Error::DimensionMismatch {
            expected: a.order(),
            actual: b.order(),
        });
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum())
}

/// Horner evaluation of `sum_j coeffs[j] * A^j` (ascending powers, `A^0 = I`).
pub fn poly_eval_matrix(coeffs: &[f64], a: &SymmetricMatrix) -> SymmetricMatrix {
    let n = a.order();
    if coeffs.is_empty() {
        return SymmetricMatrix(Matrix::zeros(n, n));
    }
    let mut acc = Matrix::identity(n).scale(coeffs[coeffs.len() - 1]);
    for &c in coeffs[..coeffs.len() - 1].iter().rev() {
        acc = acc.matmul(a.matrix());
        for i in 0..n {
            let v = acc.get(i, i) + c;
            acc.set(i, i, v);
        }
    }
    SymmetricMatrix::from_symmetrized(&acc)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Frobenius inner product on raw matrices (no symmetry requirement).
pub(crate) fn frobenius_inner_raw(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    dot(a.as_slice(), b.as_slice())
}
