//! Dense real-symmetric matrices, their spectral decomposition and the
//! scalar functional calculus used to lift coefficient functions to
//! matrices.
//!
//! The normalized trace `tr_N = Tr / N` plays the role of the tracial state,
//! and [`SymMatrix::l2_norm`] is the matching `L²` norm `sqrt(tr_N(A·A))`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A real symmetric `N×N` matrix stored densely.
///
/// Every constructor either checks or enforces exact symmetry, so
/// `m[(i, j)] == m[(j, i)]` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self(DMatrix::from_diagonal_element(dim, dim, value))
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "matrix dimension must be positive");
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    /// Returns `(A + Aᵀ) / 2`.
    ///
    /// Panics if `a` is not square or is empty.
    pub fn symmetrize(a: &DMatrix<f64>) -> Self {
        assert!(
            a.is_square() && a.nrows() >= 1,
            "symmetrize needs a non-empty square matrix"
        );
        let n = a.nrows();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] = if i == j {
                    a[(i, i)]
                } else {
                    0.5 * (a[(i, j)] + a[(j, i)])
                };
            }
        }
        Self(out)
    }

    /// Symmetrizes a row-major `n×n` array.
    pub fn symmetrize_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(
            rows.iter().all(|r| r.len() == n),
            "rows must form a square array"
        );
        Self::symmetrize(&DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Wraps `a` without copying if it is exactly symmetric.
    pub fn try_from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "expected a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if max_asymmetry(&a) != 0.0 {
            return Err(Error::InvalidParameter(
                "matrix is not exactly symmetric".into(),
            ));
        }
        Ok(Self(a))
    }

    /// Builds a symmetric matrix from the upper triangle produced by `f(i, j)`, `i <= j`.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    /// `Σᵢ Aᵢᵢ / N`.
    pub fn normalized_trace(&self) -> f64 {
        self.0.trace() / self.dim() as f64
    }

    /// `sqrt(tr_N(A·A))`, evaluated entrywise as `sqrt(Σ Aᵢⱼ² / N)`.
    pub fn l2_norm(&self) -> f64 {
        (self.0.norm_squared() / self.dim() as f64).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Applies `f` entrywise; symmetry is preserved.
    pub fn map_entries(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }

    /// `self + c·I`.
    pub fn shift(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] += c;
        }
        Self(m)
    }

    /// Matrix product; generally not symmetric.
    pub fn matmul(&self, other: &SymMatrix) -> DMatrix<f64> {
        &self.0 * &other.0
    }

    pub fn eigh(&self) -> Result<SpectralDecomposition> {
        eigh(self)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eigh(self)?.eigenvalues)
    }

    fn check_dim(&self, other: &SymMatrix) {
        assert_eq!(self.dim(), other.dim(), "matrix dimensions differ");
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        self.check_dim(rhs);
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        self.check_dim(rhs);
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

/// Largest `|Aᵢⱼ − Aⱼᵢ|`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues in non-decreasing order with an orthogonal basis whose
/// columns are the matching eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub basis: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Q · diag(values) · Qᵀ`, symmetrized.
    pub fn reassemble(&self, values: &[f64]) -> SymMatrix {
        assert_eq!(values.len(), self.dim());
        let mut scaled = self.basis.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values[j];
        }
        SymMatrix::symmetrize(&(scaled * self.basis.transpose()))
    }

    /// Applies `f` to every eigenvalue and reassembles.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
        let values = self
            .eigenvalues
            .iter()
            .map(|&x| {
                let y = f(x);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Domain {
                        value: x,
                        reason: format!("function returned {y}"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.reassemble(&values))
    }
}

/// Symmetric eigendecomposition.
pub fn eigh(a: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = a.dim();
    if a.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolver { dim: n });
    }
    let max_sweeps = 64 * n + 64;
    let eig = SymmetricEigen::try_new(a.0.clone(), f64::EPSILON, max_sweeps)
        .ok_or(Error::EigenSolver { dim: n })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolver { dim: n });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let basis = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition { eigenvalues, basis })
}

/// `Q · diag(f(λ)) · Qᵀ` for `(λ, Q) = eigh(A)`.
///
/// Fails with [`Error::Domain`] when `f` returns a non-finite value at some
/// eigenvalue, e.g. `sqrt` of a negative number.
pub fn apply_scalar_function(a: &SymMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    eigh(a)?.map(f)
}

/// Square root of the positive part of `A`.
///
/// Negative eigenvalues are clamped to zero. The returned count only includes
/// eigenvalues below `-clamp_tol`, so round-off sized negatives are not reported.
pub fn psd_sqrt(a: &SymMatrix, clamp_tol: f64) -> Result<(SymMatrix, usize)> {
    assert!(clamp_tol >= 0.0, "clamp_tol must be non-negative");
    let spec = eigh(a)?;
    let clamped = spec.eigenvalues.iter().filter(|&&v| v < -clamp_tol).count();
    let roots: Vec<f64> = spec
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0).sqrt())
        .collect();
    Ok((spec.reassemble(&roots), clamped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn normalized_trace_examples() {
        assert_eq!(SymMatrix::identity(5).normalized_trace(), 1.0);
        assert_eq!(SymMatrix::zeros(3).normalized_trace(), 0.0);
        assert_eq!(
            SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]).normalized_trace(),
            2.0
        );
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(SymMatrix::identity(7).l2_norm(), 1.0);
        assert_eq!(SymMatrix::zeros(4).l2_norm(), 0.0);
        let d = SymMatrix::from_diagonal(&[3.0, 4.0]);
        assert!((d.l2_norm() - 12.5_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn eigh_of_diagonal_sorts_and_permutes() {
        let spec = eigh(&SymMatrix::from_diagonal(&[2.0, 1.0])).unwrap();
        assert_eq!(spec.eigenvalues, vec![1.0, 2.0]);
        // first column must be ±e₂, second ±e₁
        assert_eq!(spec.basis[(0, 0)].abs(), 0.0);
        assert_eq!(spec.basis[(1, 0)].abs(), 1.0);
        assert_eq!(spec.basis[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn eigh_identity_and_swap() {
        let spec = eigh(&SymMatrix::identity(4)).unwrap();
        assert!(spec.eigenvalues.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let swap = SymMatrix::symmetrize_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let spec = eigh(&swap).unwrap();
        assert!((spec.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_rejects_non_finite_input() {
        let bad = SymMatrix::from_diagonal(&[1.0, f64::NAN]);
        assert!(matches!(eigh(&bad), Err(Error::EigenSolver { dim: 2 })));
    }

    #[test]
    fn apply_scalar_function_examples() {
        let a = SymMatrix::symmetrize_rows(&[
            vec![2.0, -1.0, 0.5],
            vec![-1.0, 3.0, 0.25],
            vec![0.5, 0.25, -1.0],
        ]);
        let same = apply_scalar_function(&a, |x| x).unwrap();
        assert!((same.as_matrix() - a.as_matrix()).amax() < 1e-10);

        let r = apply_scalar_function(&SymMatrix::from_diagonal(&[4.0, 9.0]), f64::sqrt).unwrap();
        assert!((r.as_matrix() - SymMatrix::from_diagonal(&[2.0, 3.0]).as_matrix()).amax() < 1e-14);

        let c = apply_scalar_function(&a, |_| 2.5).unwrap();
        assert!((c.as_matrix() - SymMatrix::scaled_identity(3, 2.5).as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn apply_scalar_function_reports_domain_violation() {
        let a = SymMatrix::from_diagonal(&[1.0, -2.0]);
        match apply_scalar_function(&a, f64::sqrt) {
            Err(Error::Domain { value, .. }) => assert!((value + 2.0).abs() < 1e-14),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn psd_sqrt_examples() {
        let (r, n) = psd_sqrt(&SymMatrix::from_diagonal(&[4.0, 1.0]), 1e-12).unwrap();
        assert_eq!(n, 0);
        assert!((r.as_matrix() - SymMatrix::from_diagonal(&[2.0, 1.0]).as_matrix()).amax() < 1e-15);

        let (r, n) = psd_sqrt(&SymMatrix::from_diagonal(&[1.0, -1e-15]), 1e-12).unwrap();
        assert_eq!(n, 0);
        assert!((r.as_matrix() - SymMatrix::from_diagonal(&[1.0, 0.0]).as_matrix()).amax() < 1e-15);

        let (r, n) = psd_sqrt(&SymMatrix::from_diagonal(&[1.0, -0.5]), 1e-12).unwrap();
        assert_eq!(n, 1);
        assert!((r.as_matrix() - SymMatrix::from_diagonal(&[1.0, 0.0]).as_matrix()).amax() < 1e-15);
    }

    #[test]
    fn symmetrize_examples() {
        let s = SymMatrix::symmetrize_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]);
        assert_eq!(
            s.as_matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0])
        );

        let s = SymMatrix::symmetrize_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]);
        assert_eq!(
            s.as_matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );

        let s = SymMatrix::symmetrize_rows(&[
            vec![0.0, 3.0, -1.0],
            vec![-3.0, 0.0, 2.0],
            vec![1.0, -2.0, 0.0],
        ]);
        assert_eq!(s.max_abs(), 0.0);
    }

    #[test]
    fn try_from_matrix_checks_symmetry() {
        assert!(
            SymMatrix::try_from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]))
                .is_ok()
        );
        assert!(
            SymMatrix::try_from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]))
                .is_err()
        );
        assert!(SymMatrix::try_from_matrix(DMatrix::zeros(2, 3)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sym_matrix(max_dim: usize) -> impl Strategy<Value = SymMatrix> {
            (1..=max_dim).prop_flat_map(|n| {
                proptest::collection::vec(-3.0..3.0_f64, n * n)
                    .prop_map(move |v| SymMatrix::symmetrize(&DMatrix::from_vec(n, n, v)))
            })
        }

        fn orthogonal_and_diag(max_dim: usize) -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>)> {
            (1..=max_dim).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-1.0..1.0_f64, n * n),
                    proptest::collection::vec(-2.0..2.0_f64, n),
                )
                    .prop_map(move |(v, d)| {
                        let mut seed = DMatrix::from_vec(n, n, v);
                        for i in 0..n {
                            seed[(i, i)] += 3.0;
                        }
                        (seed.qr().q(), d)
                    })
            })
        }

        proptest! {
            #[test]
            fn decomposition_invariants(a in sym_matrix(12)) {
                let spec = eigh(&a).unwrap();
                let n = a.dim();
                prop_assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
                let qqt = &spec.basis * spec.basis.transpose();
                prop_assert!((qqt - DMatrix::identity(n, n)).amax() < 1e-10);
                let back = spec.reassemble(&spec.eigenvalues);
                if a.as_matrix().norm() > 1e-12 {
                    prop_assert!(frob_rel(back.as_matrix(), a.as_matrix()) < 1e-9);
                }
            }

            #[test]
            fn functional_calculus_conjugation((q, d) in orthogonal_and_diag(10)) {
                let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&d));
                let a = SymMatrix::symmetrize(&(&q * &lam * q.transpose()));
                let f = |x: f64| (0.7 * x).sin() + x * x;
                let got = apply_scalar_function(&a, f).unwrap();
                let fd = DMatrix::from_diagonal(&DVector::from_iterator(d.len(), d.iter().map(|&x| f(x))));
                let want = &q * fd * q.transpose();
                prop_assert!((got.as_matrix() - want).norm() < 1e-9);
            }

            #[test]
            fn functional_calculus_composition(a in sym_matrix(10)) {
                let f = |x: f64| x.exp() * 0.5;
                let g = |y: f64| y.ln() + y * y;
                let stepwise = apply_scalar_function(&apply_scalar_function(&a, f).unwrap(), g).unwrap();
                let composed = apply_scalar_function(&a, |x| g(f(x))).unwrap();
                prop_assert!((stepwise.as_matrix() - composed.as_matrix()).norm() < 1e-9 * composed.as_matrix().norm().max(1.0));
            }

            #[test]
            fn l2_norm_matches_spectrum(a in sym_matrix(12)) {
                let lam = a.eigenvalues().unwrap();
                let spectral = lam.iter().map(|l| l * l).sum::<f64>() / a.dim() as f64;
                let entrywise = a.l2_norm().powi(2);
                prop_assert!((spectral - entrywise).abs() < 1e-10 * entrywise.max(1.0));
            }

            #[test]
            fn psd_sqrt_squares_back(a in sym_matrix(10)) {
                let psd = SymMatrix::symmetrize(&a.matmul(&a));
                let (r, clamped) = psd_sqrt(&psd, 1e-9).unwrap();
                prop_assert_eq!(clamped, 0);
                let sq = r.matmul(&r);
                prop_assert!((sq - psd.as_matrix()).amax() < 1e-9 * psd.max_abs().max(1.0));
            }
        }
    }
}
