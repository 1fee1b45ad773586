//! Symmetric eigendecomposition and the PSD square root built on it.

use nalgebra::{DMatrix, SymmetricEigen};

use super::Matrix;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;

fn check_symmetric(m: &Matrix, op: &'static str) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(Error::shape(op, format!("{}x{} is not square", m.rows(), m.cols())));
    }
    let scale = m.data().iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..m.rows() {
        for j in (i + 1)..m.cols() {
            let gap = (m.get(i, j) - m.get(j, i)).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(Error::shape(op, format!("not symmetric: |m[{i},{j}] - m[{j},{i}]| = {gap:e}")));
            }
        }
    }
    Ok(())
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    // Symmetrize exactly so the solver sees a symmetric operand.
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
}

/// Eigenvalues and eigenvectors (columns) of a symmetric matrix.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_symmetric(m, "symmetric_eigen")?;
    let eig = SymmetricEigen::new(to_dmatrix(m));
    let n = m.rows();
    let vectors = Matrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)]);
    Ok((eig.eigenvalues.iter().copied().collect(), vectors))
}

/// Symmetric square root of a positive semi-definite matrix.
///
/// Eigenvalues below zero (round-off on rank-deficient covariances) are
/// clipped to zero before the root is taken.
pub fn matrix_sqrt_psd(m: &Matrix) -> Result<Matrix> {
    let (values, vectors) = symmetric_eigen(m)?;
    let n = m.rows();
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    // V diag(r) Vᵀ, symmetrized.
    let scaled = Matrix::from_fn(n, n, |i, j| vectors.get(i, j) * roots[j]);
    let s = scaled.matmul_nt(&vectors)?;
    Ok(Matrix::from_fn(n, n, |i, j| 0.5 * (s.get(i, j) + s.get(j, i))))
}

/// Sum of square roots of the (clipped) eigenvalues.
pub fn trace_sqrt_psd(m: &Matrix) -> Result<f64> {
    let (values, _) = symmetric_eigen(m)?;
    Ok(values.iter().map(|&v| v.max(0.0).sqrt()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian_sample, Rng};

    #[test]
    fn identity_and_diagonal_cases() {
        let i3 = Matrix::identity(3);
        let s = matrix_sqrt_psd(&i3).unwrap();
        for (a, b) in s.data().iter().zip(i3.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = matrix_sqrt_psd(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-14);
        assert!((s.get(1, 1) - 3.0).abs() < 1e-14);
        assert!(s.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn square_of_root_recovers_random_psd() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let a = gaussian_sample(&mut rng, 5, 5, 0.0, 1.0).unwrap();
            let m = a.matmul_tn(&a).unwrap();
            let s = matrix_sqrt_psd(&m).unwrap();
            let back = s.matmul(&s).unwrap();
            let rel = back.sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
            assert!(rel < 1e-8, "relative error {rel:e}");
            assert!(s.sub(&s.transpose()).unwrap().frobenius_norm() < 1e-10);
            let (vals, _) = symmetric_eigen(&s).unwrap();
            assert!(vals.iter().all(|&v| v > -1e-9));
        }
    }

    #[test]
    fn rank_deficient_input_is_clipped() {
        let v = Matrix::new(3, 1, vec![1.0, 2.0, -1.0]).unwrap();
        let m = v.matmul_nt(&v).unwrap();
        let s = matrix_sqrt_psd(&m).unwrap();
        let back = s.matmul(&s).unwrap();
        assert!(back.sub(&m).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn asymmetric_input_is_a_shape_error() {
        let m = Matrix::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(matrix_sqrt_psd(&m), Err(Error::Shape { .. })));
        assert!(matches!(matrix_sqrt_psd(&Matrix::zeros(2, 3)), Err(Error::Shape { .. })));
    }
}
