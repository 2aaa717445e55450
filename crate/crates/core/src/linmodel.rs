//! Deterministic linear-regression solvers: OLS, ridge, and a cyclic
//! coordinate-descent LASSO.
//!
//! All fits report the residual variance with divisor `rows - 1` and, where
//! meaningful, the inverse moment matrix used downstream for covariance
//! plug-ins.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Which distribution a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Observational,
    Interventional,
}

/// A design matrix (rows = samples) with its outcome vector and regime tag.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub regime: Regime,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, regime: Regime) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} rows but {} outcomes",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { x, y, regime })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    /// Number of treatment columns.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Fitting method recorded on a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitMethod {
    Ols,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
}

/// A fitted coefficient vector with the quantities needed for plug-in
/// covariance estimates.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coef: DVector<f64>,
    /// `(X'X)^{-1}` (or the ridge analog); absent for LASSO.
    pub moment_inverse: Option<DMatrix<f64>>,
    /// `||y - X coef||^2 / (rows - 1)`.
    pub residual_variance: f64,
    pub method: FitMethod,
    /// False only when LASSO hit `max_iter` before the tolerance.
    pub converged: bool,
}

impl FitResult {
    /// Plug-in covariance `(X'X)^{-1} sigma_hat^2` of the fitted coefficients.
    pub fn coef_covariance(&self) -> Option<DMatrix<f64>> {
        self.moment_inverse
            .as_ref()
            .map(|m| m * self.residual_variance)
    }
}

fn residual_variance(data: &Dataset, coef: &DVector<f64>) -> f64 {
    let resid = &data.y - &data.x * coef;
    resid.norm_squared() / (data.rows() as f64 - 1.0)
}

/// Ordinary least squares via the normal equations.
pub fn fit_ols(data: &Dataset) -> Result<FitResult> {
    let (n, p) = (data.rows(), data.dim());
    if n < p + 1 {
        return Err(Error::InsufficientData(format!(
            "OLS needs at least p + 1 = {} rows, got {n}",
            p + 1
        )));
    }
    let xtx = data.x.tr_mul(&data.x);
    linalg::check_nonsingular(&xtx, "X'X")?;
    let xty = data.x.tr_mul(&data.y);
    let coef = linalg::spd_solve_vec(&xtx, &xty)?;
    let moment_inverse = linalg::spd_inverse(&xtx)?;
    Ok(FitResult {
        residual_variance: residual_variance(data, &coef),
        coef,
        moment_inverse: Some(moment_inverse),
        method: FitMethod::Ols,
        converged: true,
    })
}

/// Ridge regression: `coef = (X'X + lambda I)^{-1} X'y`.
pub fn fit_ridge(data: &Dataset, lambda: f64) -> Result<FitResult> {
    if lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "ridge lambda must be nonnegative, got {lambda}"
        )));
    }
    let p = data.dim();
    let mut xtx = data.x.tr_mul(&data.x);
    if lambda == 0.0 {
        linalg::check_nonsingular(&xtx, "X'X")?;
    } else {
        for i in 0..p {
            xtx[(i, i)] += lambda;
        }
    }
    let xty = data.x.tr_mul(&data.y);
    let coef = linalg::spd_solve_vec(&xtx, &xty)?;
    let moment_inverse = linalg::spd_inverse(&xtx)?;
    Ok(FitResult {
        residual_variance: residual_variance(data, &coef),
        coef,
        moment_inverse: Some(moment_inverse),
        method: FitMethod::Ridge { lambda },
        converged: true,
    })
}

pub const LASSO_DEFAULT_TOL: f64 = 1e-8;
pub const LASSO_DEFAULT_MAX_ITER: usize = 10_000;

/// Soft-thresholding operator `sign(x) max(|x| - t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// LASSO via cyclic coordinate descent on `||y - X b||^2 + lambda ||b||_1`.
///
/// Convergence is declared when the largest coordinate change in a full sweep
/// drops below `tol`. If `max_iter` sweeps pass first, the last iterate is
/// returned with `converged = false`.
pub fn fit_lasso(data: &Dataset, lambda: f64, tol: f64, max_iter: usize) -> Result<FitResult> {
    fit_lasso_warm(data, lambda, tol, max_iter, None)
}

/// [`fit_lasso`] with an optional warm-start iterate (used along lambda paths).
pub fn fit_lasso_warm(
    data: &Dataset,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    warm: Option<&DVector<f64>>,
) -> Result<FitResult> {
    if lambda < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lasso lambda must be nonnegative, got {lambda}"
        )));
    }
    let p = data.dim();
    let col_sq: Vec<f64> = (0..p).map(|j| data.x.column(j).norm_squared()).collect();
    if col_sq.contains(&0.0) {
        return Err(Error::InvalidParameter(
            "lasso design has an all-zero column".into(),
        ));
    }
    let mut coef = match warm {
        Some(w) if w.len() == p => w.clone(),
        _ => DVector::zeros(p),
    };
    // Residual r = y - X b, maintained incrementally.
    let mut resid = &data.y - &data.x * &coef;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let xj = data.x.column(j);
            let old = coef[j];
            // Partial correlation with coordinate j removed from the fit.
            let rho = xj.dot(&resid) + col_sq[j] * old;
            // Minimizer of ||y - X b||^2 + lambda |b_j| in b_j.
            let new = soft_threshold(rho, lambda / 2.0) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &xj, 1.0);
                coef[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        residual_variance: resid.norm_squared() / (data.rows() as f64 - 1.0),
        coef,
        moment_inverse: None,
        method: FitMethod::Lasso { lambda },
        converged,
    })
}
