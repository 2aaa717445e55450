//! Small dense linear-algebra helpers shared by the solvers.
//!
//! All solves against symmetric positive (semi-)definite matrices go through
//! [`spd_solve`], which attempts a Cholesky factorization and falls back to a
//! symmetric-eigendecomposition pseudo-solve when the factorization fails.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue ratio below which a moment matrix is treated as
/// singular.
pub const SINGULARITY_RTOL: f64 = 1e-10;

/// Checks that a symmetric matrix is numerically nonsingular:
/// smallest eigenvalue > `SINGULARITY_RTOL` x largest.
pub fn check_nonsingular(a: &DMatrix<f64>, context: &str) -> Result<()> {
    let eigs = a.clone().symmetric_eigenvalues();
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || max.is_nan() || min <= SINGULARITY_RTOL * max {
        return Err(Error::SingularMoment(format!(
            "{context}: eigenvalue range [{min:.3e}, {max:.3e}]"
        )));
    }
    Ok(())
}

/// Solves `A X = B` for symmetric positive definite `A`.
///
/// Cholesky first; if that fails (indefiniteness from rounding), an
/// eigendecomposition-based pseudo-solve is used with small eigenvalues
/// clamped.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "spd_solve: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 || max.is_nan() {
        return Err(Error::SingularMoment(
            "spd_solve: matrix has no positive eigenvalues".into(),
        ));
    }
    let cutoff = SINGULARITY_RTOL * max;
    let mut inv_eigs = eig.eigenvalues.clone();
    for v in inv_eigs.iter_mut() {
        *v = if *v > cutoff { 1.0 / *v } else { 0.0 };
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&inv_eigs) * q.transpose() * b)
}

/// Solves `A x = b` for a vector right-hand side.
pub fn spd_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let sol = spd_solve(a, &rhs)?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Inverse of a symmetric positive definite matrix via `spd_solve`.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let id = DMatrix::identity(a.nrows(), a.ncols());
    spd_solve(a, &id)
}

/// Solves `X M = B` for symmetric `M`, i.e. computes `B M^{-1}`.
///
/// Used for weight matrices of the form `(...) (...)^{-1}`, where the inverted
/// factor is symmetric but the product is not.
pub fn solve_right(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // X M = B  <=>  M X' = B' for symmetric M.
    Ok(spd_solve(m, &b.transpose())?.transpose())
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Maximum absolute symmetry defect `max_ij |A_ij - A_ji|`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let mut defect: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            defect = defect.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    defect
}

/// Symmetric factor `F` with `F F' = A` for positive semidefinite `A`.
///
/// Cholesky when `A` is positive definite, otherwise an eigendecomposition
/// square root with negative eigenvalues (rounding noise) clamped to zero.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if symmetry_defect(a) > 1e-8 {
        return Err(Error::InvalidParameter(
            "psd_factor: matrix is not symmetric".into(),
        ));
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = a.clone().symmetric_eigen();
    let mut sqrt_eigs = eig.eigenvalues.clone();
    for v in sqrt_eigs.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_eigs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spd_solve_matches_direct_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0]);
        let x = spd_solve_vec(&a, &b).unwrap();
        // Cramer's rule on the 2x2 system.
        let det = 4.0 * 3.0 - 1.0;
        assert_relative_eq!(x[0], (1.0 * 3.0 - 2.0 * 1.0) / det, epsilon = 1e-12);
        assert_relative_eq!(x[1], (4.0 * 2.0 - 1.0 * 1.0) / det, epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_detected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(check_nonsingular(&a, "test").is_err());
    }

    #[test]
    fn solve_right_computes_b_m_inv() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = solve_right(&b, &m).unwrap();
        let recon = &x * &m;
        assert_relative_eq!(recon, b, epsilon = 1e-10);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let f = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 2.0, 0.0, -0.3, 0.1, 0.7]);
        let a = &f * f.transpose();
        let g = psd_factor(&a).unwrap();
        assert_relative_eq!(&g * g.transpose(), a, epsilon = 1e-10);
    }
}
