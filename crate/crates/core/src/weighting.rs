//! Weight-matrix construction and the combined estimator
//! `alpha_hat_W = W alpha_hat_I + (I - W) alpha_hat_O`.
//!
//! Covers the pooled and ridge special cases, the optimal scalar, diagonal,
//! and full-matrix weights, their plug-in estimates with epsilon
//! stabilization, the l2/l1-regularized Delta variants, and the Rosenman
//! scalar baseline.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::linmodel::{self, Dataset, FitResult};

/// Which weighting scheme produced a [`WeightMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum WeightScheme {
    Pooled,
    Ridge { lambda: f64 },
    OptimalScalar,
    OptimalDiagonal,
    OptimalMatrix,
    PluginMatrix { epsilon: f64 },
    PluginL2 { lambda: f64, epsilon: f64 },
    PluginL1 { lambda: f64, epsilon: f64 },
    Rosenman,
    Interventional,
    Observational,
}

/// A p x p weight matrix tagged with its construction scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightMatrix {
    #[serde(flatten)]
    pub scheme: WeightScheme,
    #[serde(with = "crate::serde_util::matrix")]
    pub w: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

/// Plug-in quantities shared by the estimated weighting schemes.
#[derive(Debug, Clone)]
pub struct EstimatorInputs {
    pub fit_obs: FitResult,
    pub fit_int: FitResult,
    /// `(X_O' X_O)^{-1} sigma_hat^2_{Y|X}`.
    pub cov_obs_hat: DMatrix<f64>,
    /// `(X_I' X_I)^{-1} sigma_hat^2_{Y|do(X)}`.
    pub cov_int_hat: DMatrix<f64>,
    /// `alpha_hat_O - alpha_hat_I`.
    pub delta_hat: DVector<f64>,
}

impl EstimatorInputs {
    pub fn from_fits(fit_obs: FitResult, fit_int: FitResult) -> Result<Self> {
        let cov_obs_hat = fit_obs.coef_covariance().ok_or_else(|| {
            Error::InvalidParameter("observational fit lacks a moment inverse".into())
        })?;
        let cov_int_hat = fit_int.coef_covariance().ok_or_else(|| {
            Error::InvalidParameter("interventional fit lacks a moment inverse".into())
        })?;
        let delta_hat = delta_hat_plain(&fit_obs, &fit_int)?;
        Ok(Self {
            fit_obs,
            fit_int,
            cov_obs_hat,
            cov_int_hat,
            delta_hat,
        })
    }
}

/// Default stabilization, scaled relative to the bias estimate.
pub fn default_epsilon(delta_hat: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + delta_hat.norm_squared())
}

/// `W alpha_hat_I + (I - W) alpha_hat_O`.
pub fn combine(
    weight: &WeightMatrix,
    fit_int: &FitResult,
    fit_obs: &FitResult,
) -> Result<DVector<f64>> {
    let p = weight.dim();
    if fit_int.coef.len() != p || fit_obs.coef.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "weight is {p}x{p} but estimates have lengths {} and {}",
            fit_int.coef.len(),
            fit_obs.coef.len()
        )));
    }
    Ok(&weight.w * (&fit_int.coef - &fit_obs.coef) + &fit_obs.coef)
}

/// `W_P = (X_O'X_O + X_I'X_I)^{-1} X_I'X_I`; combining with it reproduces
/// OLS on the row-concatenated data.
pub fn weight_pooled(obs: &Dataset, int: &Dataset) -> Result<WeightMatrix> {
    if obs.dim() != int.dim() {
        return Err(Error::DimensionMismatch(
            "regimes have different treatment dimensions".into(),
        ));
    }
    let moment_obs = obs.x.tr_mul(&obs.x);
    let moment_int = int.x.tr_mul(&int.x);
    let total = &moment_obs + &moment_int;
    linalg::check_nonsingular(&total, "pooled moment matrix")?;
    let w = linalg::spd_solve(&total, &moment_int)?;
    Ok(WeightMatrix {
        scheme: WeightScheme::Pooled,
        w,
    })
}

/// `W_ridge = (X_I'X_I + lambda I)^{-1} X_I'X_I`. The caller must pair this
/// weight with a zero "observational" estimate.
pub fn weight_ridge(int: &Dataset, lambda: f64) -> Result<WeightMatrix> {
    if lambda <= 0.0 || lambda.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "ridge weight needs lambda > 0, got {lambda}"
        )));
    }
    let p = int.dim();
    let moment = int.x.tr_mul(&int.x);
    let mut shifted = moment.clone();
    for i in 0..p {
        shifted[(i, i)] += lambda;
    }
    let w = linalg::spd_solve(&shifted, &moment)?;
    Ok(WeightMatrix {
        scheme: WeightScheme::Ridge { lambda },
        w,
    })
}

/// Optimal weight for `W = w I`:
/// `w* = (TrCov_O + ||Delta||^2) / (TrCov_I + TrCov_O + ||Delta||^2)`.
pub fn optimal_scalar_weight(
    tr_cov_obs: f64,
    tr_cov_int: f64,
    delta_sq_norm: f64,
) -> Result<f64> {
    if tr_cov_obs < 0.0 || tr_cov_int < 0.0 || delta_sq_norm < 0.0 {
        return Err(Error::InvalidParameter(
            "scalar weight inputs must be nonnegative".into(),
        ));
    }
    let denom = tr_cov_int + tr_cov_obs + delta_sq_norm;
    if denom <= 1e-15 {
        return Err(Error::DegenerateWeight(
            "both estimators exact with identical bias".into(),
        ));
    }
    Ok((tr_cov_obs + delta_sq_norm) / denom)
}

/// Coordinatewise optimal weights; the MSE objective decouples per dimension.
pub fn optimal_diagonal_weight(
    cov_obs: &DMatrix<f64>,
    cov_int: &DMatrix<f64>,
    delta: &DVector<f64>,
) -> Result<WeightMatrix> {
    let p = delta.len();
    let mut diag = DVector::zeros(p);
    for k in 0..p {
        diag[k] = optimal_scalar_weight(cov_obs[(k, k)], cov_int[(k, k)], delta[k] * delta[k])?;
    }
    Ok(WeightMatrix {
        scheme: WeightScheme::OptimalDiagonal,
        w: DMatrix::from_diagonal(&diag),
    })
}

/// `W* = (Cov_O + Delta Delta') (Cov_I + Cov_O + Delta Delta')^{-1}`.
pub fn optimal_weight_matrix(
    cov_obs: &DMatrix<f64>,
    cov_int: &DMatrix<f64>,
    delta: &DVector<f64>,
) -> Result<WeightMatrix> {
    let outer = delta * delta.transpose();
    let numerator = cov_obs + &outer;
    let denominator = cov_int + &numerator;
    linalg::check_nonsingular(&denominator, "Cov_I + Cov_O + Delta Delta'")?;
    let w = linalg::solve_right(&numerator, &denominator)?;
    Ok(WeightMatrix {
        scheme: WeightScheme::OptimalMatrix,
        w,
    })
}

fn plugin_matrix_from(
    cov_obs: &DMatrix<f64>,
    cov_int: &DMatrix<f64>,
    delta: &DVector<f64>,
    epsilon: f64,
    scheme: WeightScheme,
) -> Result<WeightMatrix> {
    if epsilon <= 0.0 || epsilon.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "plugin weight needs epsilon > 0, got {epsilon}"
        )));
    }
    let p = delta.len();
    let mut numerator = cov_obs + delta * delta.transpose();
    for i in 0..p {
        numerator[(i, i)] += epsilon;
    }
    let denominator = cov_int + &numerator;
    // PSD inputs plus epsilon I make the denominator positive definite.
    debug_assert!(linalg::check_nonsingular(&denominator, "plugin denominator").is_ok());
    let w = linalg::solve_right(&numerator, &denominator)?;
    Ok(WeightMatrix { scheme, w })
}

/// Epsilon-stabilized plug-in of the optimal weight matrix.
pub fn plugin_weight_matrix(inputs: &EstimatorInputs, epsilon: f64) -> Result<WeightMatrix> {
    plugin_matrix_from(
        &inputs.cov_obs_hat,
        &inputs.cov_int_hat,
        &inputs.delta_hat,
        epsilon,
        WeightScheme::PluginMatrix { epsilon },
    )
}

/// Plug-in weight with a substitute Delta estimate (the l2/l1 variants).
pub fn plugin_weight_with_delta(
    inputs: &EstimatorInputs,
    delta: &DVector<f64>,
    epsilon: f64,
    scheme: WeightScheme,
) -> Result<WeightMatrix> {
    plugin_matrix_from(&inputs.cov_obs_hat, &inputs.cov_int_hat, delta, epsilon, scheme)
}

/// Unbiased bias estimate `Delta_hat = alpha_hat_O - alpha_hat_I`.
pub fn delta_hat_plain(fit_obs: &FitResult, fit_int: &FitResult) -> Result<DVector<f64>> {
    if fit_obs.coef.len() != fit_int.coef.len() {
        return Err(Error::DimensionMismatch(
            "pure estimators have different lengths".into(),
        ));
    }
    Ok(&fit_obs.coef - &fit_int.coef)
}

/// Penalty applied in the two-step Delta regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    L2 { lambda: f64 },
    L1 { lambda: f64 },
}

impl Penalty {
    pub fn lambda(&self) -> f64 {
        match *self {
            Penalty::L2 { lambda } | Penalty::L1 { lambda } => lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Penalty {
        match self {
            Penalty::L2 { .. } => Penalty::L2 { lambda },
            Penalty::L1 { .. } => Penalty::L1 { lambda },
        }
    }
}

/// Two-step regularized Delta: form residuals `r = Y_I - X_I alpha_hat_O`
/// against the observational fit, then solve the penalized regression of
/// `-r` on `X_I`.
///
/// With `pin_intercept` the last (intercept) column is excluded from the
/// regression design and the corresponding Delta coordinate is fixed to 0.
pub fn delta_hat_regularized(
    fit_obs: &FitResult,
    int: &Dataset,
    penalty: Penalty,
    pin_intercept: bool,
) -> Result<DVector<f64>> {
    if penalty.lambda() < 0.0 {
        return Err(Error::InvalidParameter(
            "penalty lambda must be nonnegative".into(),
        ));
    }
    let p = int.dim();
    if fit_obs.coef.len() != p {
        return Err(Error::DimensionMismatch(
            "observational fit does not match interventional design".into(),
        ));
    }
    let resid = &int.y - &int.x * &fit_obs.coef;
    let cols = if pin_intercept { p - 1 } else { p };
    let design = int.x.columns(0, cols).into_owned();
    let target = -resid;
    let sub = solve_penalized(&design, &target, penalty)?;
    let mut delta = DVector::zeros(p);
    delta.rows_mut(0, cols).copy_from(&sub);
    Ok(delta)
}

fn solve_penalized(x: &DMatrix<f64>, y: &DVector<f64>, penalty: Penalty) -> Result<DVector<f64>> {
    let data = Dataset::new(x.clone(), y.clone(), crate::linmodel::Regime::Interventional)?;
    match penalty {
        Penalty::L2 { lambda } => {
            if lambda == 0.0 {
                Ok(linmodel::fit_ols(&data)?.coef)
            } else {
                Ok(linmodel::fit_ridge(&data, lambda)?.coef)
            }
        }
        Penalty::L1 { lambda } => {
            if lambda == 0.0 {
                Ok(linmodel::fit_ols(&data)?.coef)
            } else {
                Ok(linmodel::fit_lasso(
                    &data,
                    lambda,
                    linmodel::LASSO_DEFAULT_TOL,
                    linmodel::LASSO_DEFAULT_MAX_ITER,
                )?
                .coef)
            }
        }
    }
}

/// Rosenman scalar baseline:
/// `w = max(1 - TrCov_I / ||alpha_hat_I - alpha_hat_O||^2, 0)`.
pub fn rosenman_weight(inputs: &EstimatorInputs) -> Result<WeightMatrix> {
    let diff_sq = inputs.delta_hat.norm_squared();
    if diff_sq < 1e-24 {
        return Err(Error::DegenerateWeight(
            "pure estimators coincide; Rosenman weight undefined".into(),
        ));
    }
    let w = (1.0 - inputs.cov_int_hat.trace() / diff_sq).max(0.0);
    let p = inputs.delta_hat.len();
    Ok(WeightMatrix {
        scheme: WeightScheme::Rosenman,
        w: DMatrix::identity(p, p) * w,
    })
}

/// The kind of penalty whose lambda is selected by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L2,
    L1,
}

impl PenaltyKind {
    pub fn penalty(self, lambda: f64) -> Penalty {
        match self {
            PenaltyKind::L2 => Penalty::L2 { lambda },
            PenaltyKind::L1 => Penalty::L1 { lambda },
        }
    }
}

fn subset_rows(data: &Dataset, rows: &[usize]) -> Dataset {
    let p = data.dim();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| data.x[(rows[i], j)]);
    let y = DVector::from_fn(rows.len(), |i, _| data.y[rows[i]]);
    Dataset {
        x,
        y,
        regime: data.regime,
    }
}

/// K-fold cross-validation of the Delta-regression lambda on interventional
/// rows.
///
/// Each fold estimates Delta on its training rows and scores the mean
/// squared prediction error of `x'(alpha_hat_O - Delta_hat)` on the held-out
/// rows. Returns the lambda with minimal mean score; ties go to the larger
/// lambda. Fold assignment is a seeded shuffle, so selection is
/// deterministic.
pub fn cross_validate_lambda(
    fit_obs: &FitResult,
    int: &Dataset,
    penalty_kind: PenaltyKind,
    grid: &[f64],
    folds: usize,
    seed: u64,
    pin_intercept: bool,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    let m = int.rows();
    if m < folds {
        return Err(Error::InsufficientData(format!(
            "{m} interventional rows cannot form {folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut lambdas: Vec<f64> = grid.to_vec();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Descending order lets the L1 path warm-start from sparser solutions.
    let path: Vec<f64> = lambdas.iter().rev().cloned().collect();

    let mut scores = vec![0.0f64; path.len()];
    for fold in 0..folds {
        let test: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds == fold)
            .map(|(_, &r)| r)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != fold)
            .map(|(_, &r)| r)
            .collect();
        let train_data = subset_rows(int, &train);
        let test_data = subset_rows(int, &test);
        let cols = if pin_intercept {
            int.dim() - 1
        } else {
            int.dim()
        };
        let design = train_data.x.columns(0, cols).into_owned();
        let target = -(&train_data.y - &train_data.x * &fit_obs.coef);
        let mut warm: Option<DVector<f64>> = None;
        for (li, &lambda) in path.iter().enumerate() {
            let sub = match penalty_kind {
                PenaltyKind::L2 => solve_penalized(&design, &target, Penalty::L2 { lambda })?,
                PenaltyKind::L1 => {
                    let data = Dataset::new(
                        design.clone(),
                        target.clone(),
                        crate::linmodel::Regime::Interventional,
                    )?;
                    let fit = if lambda == 0.0 {
                        linmodel::fit_ols(&data)?
                    } else {
                        linmodel::fit_lasso_warm(
                            &data,
                            lambda,
                            linmodel::LASSO_DEFAULT_TOL,
                            linmodel::LASSO_DEFAULT_MAX_ITER,
                            warm.as_ref(),
                        )?
                    };
                    warm = Some(fit.coef.clone());
                    fit.coef
                }
            };
            let mut delta = DVector::zeros(int.dim());
            delta.rows_mut(0, cols).copy_from(&sub);
            let coef = &fit_obs.coef - &delta;
            let pred = &test_data.x * &coef;
            let err = (&test_data.y - pred).norm_squared() / test.len() as f64;
            scores[li] += err;
        }
    }
    // path is descending; scan ascending lambda, keeping ties at larger lambda.
    let mut best_lambda = path[path.len() - 1];
    let mut best_score = scores[path.len() - 1];
    for li in (0..path.len()).rev() {
        if scores[li] <= best_score {
            best_score = scores[li];
            best_lambda = path[li];
        }
    }
    Ok(best_lambda)
}

/// Analytic MSE objective of a weight matrix for known bias and covariances:
/// `||(I - W) Delta||^2 + Tr(W Cov_I W') + Tr((I - W) Cov_O (I - W)')`.
pub fn mse_objective(
    w: &DMatrix<f64>,
    cov_obs: &DMatrix<f64>,
    cov_int: &DMatrix<f64>,
    delta: &DVector<f64>,
) -> f64 {
    let p = w.nrows();
    let residual = DMatrix::identity(p, p) - w;
    let bias = &residual * delta;
    bias.norm_squared()
        + (w * cov_int * w.transpose()).trace()
        + (&residual * cov_obs * residual.transpose()).trace()
}
