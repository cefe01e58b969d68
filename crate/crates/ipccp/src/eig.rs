//! Cyclic Jacobi eigendecomposition and the eigendecomposition-based
//! square-root oracle. This is the reference path every sketched or iterated
//! quantity gets checked against, so accuracy wins over speed.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymmetricMatrix};

/// Eigendecomposition `A = V diag(values) V^t` with values sorted descending
/// and orthogonal `V` (columns are eigenvectors).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    /// Rebuilds `V diag(values) V^t`.
    pub fn reconstruct(&self) -> Matrix {
        self.map_values(|v| v)
    }

    /// Builds `V diag(f(values)) V^t`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let m = self.values.len();
        let mut out = Matrix::zeros(m, m);
        for k in 0..m {
            let fv = f(self.values[k]);
            if fv == 0.0 {
                continue;
            }
            for i in 0..m {
                let vik = self.vectors.get(i, k) * fv;
                if vik == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let v = out.get(i, j) + vik * self.vectors.get(j, k);
                    out.set(i, j, v);
                }
            }
        }
        out
    }
}

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Rotations are applied in a fixed row-cyclic order, so the result is
/// deterministic for a given input. Converged when the off-diagonal Frobenius
/// norm drops below `1e-12 * |A|_F`.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let m = a.order();
    let norm = a.frobenius_norm();
    let tol = 1e-12 * norm;

    let mut w = a.matrix().clone();
    let mut v = Matrix::identity(m);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&w) <= tol {
            return Ok(sorted_decomposition(&w, v));
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = w.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                // rotation angle annihilating w[p][q]
                let theta = 0.5 * (w.get(q, q) - w.get(p, p)) / apq;
                let t = if theta.abs() > 1e150 {
                    // avoid overflow in theta^2; limit of the formula below
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                rotate(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }

    if off_diagonal_norm(&w) <= tol {
        return Ok(sorted_decomposition(&w, v));
    }
    Err(Error::NonConvergence { sweeps: MAX_SWEEPS })
}

/// Similarity transform `w <- J^t w J` for the (p,q) rotation.
fn rotate(w: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let m = w.rows();
    for k in 0..m {
        let wkp = w.get(k, p);
        let wkq = w.get(k, q);
        w.set(k, p, c * wkp - s * wkq);
        w.set(k, q, s * wkp + c * wkq);
    }
    for k in 0..m {
        let wpk = w.get(p, k);
        let wqk = w.get(q, k);
        w.set(p, k, c * wpk - s * wqk);
        w.set(q, k, s * wpk + c * wqk);
    }
}

fn rotate_columns(v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let m = v.rows();
    for k in 0..m {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

fn off_diagonal_norm(w: &Matrix) -> f64 {
    let m = w.rows();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let x = w.get(i, j);
                sum += x * x;
            }
        }
    }
    sum.sqrt()
}

fn sorted_decomposition(w: &Matrix, v: Matrix) -> EigenDecomposition {
    let m = w.rows();
    let mut order: Vec<usize> = (0..m).collect();
    // descending by value, index as deterministic tie-break
    order.sort_by(|&i, &j| {
        w.get(j, j)
            .partial_cmp(&w.get(i, i))
            .unwrap()
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&k| w.get(k, k)).collect();
    let vectors = Matrix::from_fn(m, m, |i, j| v.get(i, order[j]));
    EigenDecomposition { values, vectors }
}

/// Exact principal square root of a PSD matrix via eigendecomposition.
///
/// Eigenvalues in `[-1e-10 * |A|_2, 0)` are clamped to zero (rounding in
/// Gram-style constructions); anything below that bound is rejected.
pub fn matrix_sqrt_exact(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(a)?;
    let spectral_norm = eig
        .values
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * spectral_norm {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let root = eig.map_values(|v| if v <= 0.0 { 0.0 } else { v.sqrt() });
    Ok(SymmetricMatrix::from_symmetrized(&root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{covariance_feature, LocalFeatureSet};
    use rand::{Rng, SeedableRng};

    fn random_symmetric(m: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                a.set(i, j, v);
                a.set(j, i, v);
            }
        }
        SymmetricMatrix::new(a).unwrap()
    }

    fn random_psd(m: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = LocalFeatureSet::new(m, m, data).unwrap();
        covariance_feature(&x)
    }

    fn reconstruction_error(a: &SymmetricMatrix, eig: &EigenDecomposition) -> f64 {
        eig.reconstruct().sub(a.matrix()).frobenius_norm() / a.frobenius_norm().max(1e-300)
    }

    fn orthogonality_error(eig: &EigenDecomposition) -> f64 {
        let v = &eig.vectors;
        let m = v.rows();
        v.transpose()
            .matmul(v)
            .sub(&Matrix::identity(m))
            .frobenius_norm()
    }

    #[test]
    fn diagonal_matrix() {
        let a = SymmetricMatrix::from_diagonal(&[3.0, 1.0]);
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.values, vec![3.0, 1.0]);
        for j in 0..2 {
            let col: Vec<f64> = (0..2).map(|i| eig.vectors.get(i, j)).collect();
            let mut expect = [0.0; 2];
            expect[j] = 1.0;
            // identity up to column sign
            let same: f64 = col.iter().zip(&expect).map(|(a, b)| a * b).sum();
            assert!((same.abs() - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn known_two_by_two() {
        let mut m = Matrix::zeros(2, 2);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        let eig = sym_eig(&SymmetricMatrix::new(m).unwrap()).unwrap();
        assert!((eig.values[0] - 1.0).abs() <= 1e-14);
        assert!((eig.values[1] + 1.0).abs() <= 1e-14);
        let r = 1.0 / 2.0f64.sqrt();
        for j in 0..2 {
            let col: Vec<f64> = (0..2).map(|i| eig.vectors.get(i, j)).collect();
            let expect = if j == 0 { [r, r] } else { [r, -r] };
            let overlap: f64 = col.iter().zip(&expect).map(|(a, b)| a * b).sum();
            assert!((overlap.abs() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_reconstruction() {
        let a = random_symmetric(8, 99);
        let eig = sym_eig(&a).unwrap();
        assert!(reconstruction_error(&a, &eig) <= 1e-10);
        assert!(orthogonality_error(&eig) <= 1e-10);
    }

    #[test]
    fn reconstruction_over_orders() {
        let mut seed = 0;
        for m in 2..=16 {
            for _ in 0..4 {
                seed += 1;
                let a = random_symmetric(m, seed);
                let eig = sym_eig(&a).unwrap();
                assert!(reconstruction_error(&a, &eig) <= 1e-10, "order {m}");
                assert!(orthogonality_error(&eig) <= 1e-10, "order {m}");
            }
        }
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i = SymmetricMatrix::identity(4);
        let r = matrix_sqrt_exact(&i).unwrap();
        assert!(r.sub(i.matrix()).frobenius_norm() <= 1e-12);

        let a = SymmetricMatrix::from_diagonal(&[4.0, 9.0]);
        let r = matrix_sqrt_exact(&a).unwrap();
        let expect = SymmetricMatrix::from_diagonal(&[2.0, 3.0]);
        assert!(r.sub(expect.matrix()).frobenius_norm() <= 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        for seed in 0..20 {
            let a = random_psd(8, 1000 + seed);
            let r = matrix_sqrt_exact(&a).unwrap();
            let back = r.matmul(r.matrix());
            let rel = back.sub(a.matrix()).frobenius_norm() / a.frobenius_norm();
            assert!(rel <= 1e-8, "seed {seed}: rel {rel:e}");
        }
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let a = SymmetricMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(matrix_sqrt_exact(&a), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sqrt_accepts_tiny_negative_rounding() {
        let a = SymmetricMatrix::from_diagonal(&[1.0, -1e-12]);
        let r = matrix_sqrt_exact(&a).unwrap();
        assert_eq!(r.get(1, 1), 0.0);
    }

    #[test]
    fn zero_matrix_sqrt_is_zero() {
        let z = SymmetricMatrix::new(Matrix::zeros(3, 3)).unwrap();
        let r = matrix_sqrt_exact(&z).unwrap();
        assert_eq!(r.frobenius_norm(), 0.0);
    }
}
