//! Coupled Newton–Schulz iteration.
//!
//! For a normalized PSD input `A` the pair `(Y_k, Z_k)` converges to
//! `(A^{1/2}, A^{-1/2})` using only matrix products and sums, and both
//! iterates stay polynomials of `A`. The square-root pooling weights are the
//! `Z_k` side rescaled by the trace that was divided out.

use crate::eig::sym_eig;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymmetricMatrix};

/// Divergence guard: |Y_k|_F must stay below this multiple of |A|_F.
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Trace below this is treated as an all-zero feature set.
const ZERO_TRACE: f64 = 1e-300;

/// State of the coupled iteration after `k` steps.
///
/// Invariant (verified by the test suite, not enforced per step):
/// `Y_k = A * Z_k` with `Y_0 = A`, `Z_0 = I`.
#[derive(Debug, Clone)]
pub struct NsState {
    y: Matrix,
    z: Matrix,
    k: usize,
    trace0: f64,
    frob0: f64,
}

impl NsState {
    /// Initial state for input `a`: `Y_0 = a`, `Z_0 = I`.
    pub fn new(a: &SymmetricMatrix) -> Self {
        Self {
            y: a.matrix().clone(),
            z: Matrix::identity(a.order()),
            k: 0,
            trace0: a.trace(),
            frob0: a.frobenius_norm(),
        }
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn iterations(&self) -> usize {
        self.k
    }

    /// Trace of the input the iteration started from.
    pub fn trace0(&self) -> f64 {
        self.trace0
    }

    /// One coupled step:
    /// `Y <- 1/2 Y (3I - Z Y)`, `Z <- 1/2 (3I - Z Y) Z`,
    /// with the shared factor `T = 3I - Z Y` computed once from the current
    /// pair (the two updates are simultaneous, not sequential).
    pub fn step(&mut self) -> Result<()> {
        let m = self.y.rows();
        let mut t = self.z.matmul(&self.y).scale(-1.0);
        for i in 0..m {
            let v = t.get(i, i) + 3.0;
            t.set(i, i, v);
        }
        self.y = self.y.matmul(&t).scale(0.5);
        self.z = t.matmul(&self.z).scale(0.5);
        self.k += 1;

        let norm = self.y.frobenius_norm();
        let limit = DIVERGENCE_FACTOR * self.frob0;
        if norm > limit || !norm.is_finite() {
            return Err(Error::Divergence { norm, limit });
        }
        debug_assert!(
            symmetry_residual(&self.y) <= 1e-8,
            "Y_k lost symmetry at k = {}",
            self.k
        );
        Ok(())
    }
}

fn symmetry_residual(m: &Matrix) -> f64 {
    m.sub(&m.transpose()).frobenius_norm() / m.frobenius_norm().max(1e-300)
}

/// Runs `k` coupled steps starting from `Y_0 = a`, `Z_0 = I`.
///
/// Requires `|a - I|_2 <= 1`, which trace normalization of a PSD matrix
/// guarantees; see [`check_contraction`] for the explicit spectral check used
/// by the oracle tests.
pub fn ns_iterate(a: &SymmetricMatrix, k: usize) -> Result<NsState> {
    assert!(k >= 1, "iteration count must be at least 1");
    let mut state = NsState::new(a);
    for _ in 0..k {
        state.step()?;
    }
    Ok(state)
}

/// Spectral precondition check: all eigenvalues of `a` within distance 1 of 1
/// (up to rounding slack). Costs a full eigendecomposition; intended for
/// oracle-mode validation, not for the hot path.
pub fn check_contraction(a: &SymmetricMatrix) -> Result<()> {
    let eig = sym_eig(a)?;
    for &v in &eig.values {
        if (v - 1.0).abs() > 1.0 + 1e-10 {
            return Err(Error::NotPsd { min_eigenvalue: v });
        }
    }
    Ok(())
}

/// Square-root pooling weights from a Gram matrix.
///
/// Normalizes `s` by its trace, runs `k` coupled steps, and returns
/// `(Z_k / sqrt(trace), trace)`. Sandwiching the weights between the
/// descriptor matrix and its transpose approximates the matrix square root of
/// the corresponding second-order feature.
pub fn sqrt_weights(s: &SymmetricMatrix, k: usize) -> Result<(Matrix, f64)> {
    let (w, trace, _) = sqrt_weights_impl(s, k, false)?;
    Ok((w, trace))
}

/// As [`sqrt_weights`] but additionally returns the iterates
/// `(Y_j, Z_j), j = 0..=k`, which the reverse-mode pullback replays.
pub(crate) fn sqrt_weights_recorded(
    s: &SymmetricMatrix,
    k: usize,
) -> Result<(Matrix, f64, Vec<(Matrix, Matrix)>)> {
    let (w, trace, states) = sqrt_weights_impl(s, k, true)?;
    Ok((w, trace, states.expect("recording requested")))
}

fn sqrt_weights_impl(
    s: &SymmetricMatrix,
    k: usize,
    record: bool,
) -> Result<(Matrix, f64, Option<Vec<(Matrix, Matrix)>>)> {
    assert!(k >= 1, "iteration count must be at least 1");
    let trace = s.trace();
    if trace <= ZERO_TRACE {
        return Err(Error::ZeroTrace);
    }
    // cheap necessary PSD check; the full spectral validation is opt-in
    for i in 0..s.order() {
        let v = s.get(i, i);
        if v < -1e-10 * trace {
            return Err(Error::NotPsd { min_eigenvalue: v });
        }
    }
    let a = SymmetricMatrix::from_symmetrized(&s.scale(1.0 / trace));
    let mut states = record.then(Vec::new);
    let mut state = NsState::new(&a);
    for _ in 0..k {
        if let Some(states) = states.as_mut() {
            states.push((state.y().clone(), state.z().clone()));
        }
        state.step()?;
    }
    if let Some(states) = states.as_mut() {
        states.push((state.y().clone(), state.z().clone()));
    }
    Ok((state.z().scale(1.0 / trace.sqrt()), trace, states))
}

/// Scalar shadow of the coupled recurrence, used as an independent oracle:
/// returns `(y_k, z_k)` for `y_0 = a`, `z_0 = 1`.
pub fn scalar_recurrence(a: f64, k: usize) -> (f64, f64) {
    let (mut y, mut z) = (a, 1.0);
    for _ in 0..k {
        let t = 3.0 - z * y;
        let y_next = 0.5 * y * t;
        let z_next = 0.5 * t * z;
        y = y_next;
        z = z_next;
    }
    (y, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::matrix_sqrt_exact;
    use crate::matrix::{covariance_feature, gram, LocalFeatureSet};
    use rand::{Rng, SeedableRng};

    fn random_set(d: usize, n: usize, seed: u64) -> LocalFeatureSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        LocalFeatureSet::new(d, n, data).unwrap()
    }

    fn normalized_psd(m: usize, seed: u64) -> SymmetricMatrix {
        let c = covariance_feature(&random_set(m, m + 2, seed));
        SymmetricMatrix::from_symmetrized(&c.scale(1.0 / c.trace()))
    }

    fn rel_err(got: &Matrix, expect: &Matrix) -> f64 {
        got.sub(expect).frobenius_norm() / expect.frobenius_norm().max(1e-300)
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let i = SymmetricMatrix::identity(4);
        let state = ns_iterate(&i, 7).unwrap();
        assert_eq!(state.y(), &Matrix::identity(4));
        assert_eq!(state.z(), &Matrix::identity(4));
    }

    #[test]
    fn scalar_input_follows_scalar_recurrence() {
        let a = SymmetricMatrix::from_diagonal(&[0.25]);
        for k in 1..=12 {
            let state = ns_iterate(&a, k).unwrap();
            let (y, z) = scalar_recurrence(0.25, k);
            assert!((state.y().get(0, 0) - y).abs() <= 1e-15);
            assert!((state.z().get(0, 0) - z).abs() <= 1e-15);
        }
        // the limit of y is sqrt(0.25)
        let state = ns_iterate(&a, 40).unwrap();
        assert!((state.y().get(0, 0) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn converges_to_eigendecomposition_sqrt() {
        let a = normalized_psd(8, 21);
        check_contraction(&a).unwrap();
        let state = ns_iterate(&a, 20).unwrap();
        let expect = matrix_sqrt_exact(&a).unwrap();
        assert!(rel_err(state.y(), expect.matrix()) <= 1e-6);
    }

    #[test]
    fn coupling_invariant_holds_along_the_trajectory() {
        for seed in 0..10 {
            let a = normalized_psd(6, 100 + seed);
            let mut state = NsState::new(&a);
            for _ in 0..20 {
                state.step().unwrap();
                let az = a.matmul(state.z());
                assert!(rel_err(state.y(), &az) <= 1e-10);
            }
        }
    }

    #[test]
    fn monotone_error_decay_on_well_conditioned_input() {
        // controlled spectrum in [0.3, 1.0]: condition number well under 100
        let d = 6;
        let basis = sym_eig(&gram(&random_set(d, d, 8))).unwrap();
        let spread: Vec<f64> = (0..d)
            .map(|i| 0.3 + 0.7 * (i as f64) / (d as f64 - 1.0))
            .collect();
        let mut base = Matrix::zeros(d, d);
        for (k, &v) in spread.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    let add = basis.vectors.get(i, k) * v * basis.vectors.get(j, k);
                    base.set(i, j, base.get(i, j) + add);
                }
            }
        }
        let sym = SymmetricMatrix::from_symmetrized(&base);
        let a = SymmetricMatrix::from_symmetrized(&sym.scale(1.0 / sym.trace()));
        let target = matrix_sqrt_exact(&a).unwrap();

        let mut state = NsState::new(&a);
        let mut prev = f64::INFINITY;
        for k in 1..=20 {
            state.step().unwrap();
            let err = rel_err(state.y(), target.matrix());
            // non-increasing until the fp64 rounding plateau
            if k >= 2 && prev > 1e-13 {
                assert!(
                    err <= prev * (1.0 + 1e-12),
                    "error increased at k = {k}: {prev:e} -> {err:e}"
                );
            }
            prev = err;
        }
    }

    #[test]
    fn sqrt_weights_unit_descriptor() {
        let s = SymmetricMatrix::from_diagonal(&[1.0]);
        for k in [1, 5, 20] {
            let (w, trace) = sqrt_weights(&s, k).unwrap();
            assert_eq!(trace, 1.0);
            assert!((w.get(0, 0) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn sqrt_weights_identity_gram_matches_scalar_recurrence() {
        let n = 5;
        let s = SymmetricMatrix::identity(n);
        for k in [1, 3, 9] {
            let (w, trace) = sqrt_weights(&s, k).unwrap();
            assert_eq!(trace, n as f64);
            let (_, zeta) = scalar_recurrence(1.0 / n as f64, k);
            let expect = zeta / (n as f64).sqrt();
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { expect } else { 0.0 };
                    assert!((w.get(i, j) - e).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn sandwiched_weights_approximate_exact_sqrt() {
        let x = random_set(8, 10, 31);
        let (w, _) = sqrt_weights(&gram(&x), 15).unwrap();
        let xm = x.to_matrix();
        let got = xm.matmul(&w).matmul(&xm.transpose());
        let expect = matrix_sqrt_exact(&covariance_feature(&x)).unwrap();
        assert!(rel_err(&got, expect.matrix()) <= 1e-4);
    }

    #[test]
    fn rank_deficient_gram_still_completes() {
        // n > d: the Gram matrix has a null space
        let x = random_set(4, 9, 77);
        let (w, _) = sqrt_weights(&gram(&x), 15).unwrap();
        let xm = x.to_matrix();
        let got = xm.matmul(&w).matmul(&xm.transpose());
        let expect = matrix_sqrt_exact(&covariance_feature(&x)).unwrap();
        assert!(rel_err(&got, expect.matrix()) <= 1e-3);
    }

    #[test]
    fn zero_trace_is_rejected() {
        let s = SymmetricMatrix::new(Matrix::zeros(3, 3)).unwrap();
        assert!(matches!(sqrt_weights(&s, 5), Err(Error::ZeroTrace)));
    }

    #[test]
    fn divergence_is_reported() {
        // spectrum far outside the contraction region
        let a = SymmetricMatrix::from_diagonal(&[40.0, 40.0]);
        let err = ns_iterate(&a, 30);
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }
}
