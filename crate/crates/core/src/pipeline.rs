//! One-shot estimation pipeline: given both datasets and a method name,
//! fit the pure estimators, build the requested weight matrix, and return
//! the combined effect estimate with diagnostics.
//!
//! Shared by the Monte Carlo harness and the CLI so that file-based and
//! in-process runs produce identical numbers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{self, Dataset, FitMethod, FitResult};
use crate::weighting::{
    self, EstimatorInputs, Penalty, PenaltyKind, WeightMatrix, WeightScheme,
};

/// Estimation method selectable by name (`kebab-case` in JSON and on the
/// command line).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// OLS on interventional data only (W = I).
    Interventional,
    /// OLS on observational data only (W = 0).
    Observational,
    /// OLS on the row-concatenated data (W_P).
    Pooled,
    /// Ridge regression on interventional data, viewed as a weight paired
    /// with a zero observational estimate.
    Ridge,
    /// Optimal scalar weight with plug-in traces and plain Delta.
    OptScalar,
    /// Optimal diagonal weight with plug-in inputs.
    OptDiag,
    /// Optimal weight matrix formula applied to raw plug-in inputs
    /// (no stabilization; may be ill-conditioned).
    OptMatrix,
    /// Epsilon-stabilized plug-in optimal weight with plain Delta.
    Plugin,
    /// Plug-in weight with l2-regularized Delta (lambda by CV unless fixed).
    PluginL2,
    /// Plug-in weight with l1-regularized Delta (lambda by CV unless fixed).
    PluginL1,
    /// Rosenman-style scalar shrinkage weight.
    Rosenman,
    /// Optimal weight matrix from ground-truth bias and covariances;
    /// requires a known data-generating model.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Interventional,
        Method::Observational,
        Method::Pooled,
        Method::Ridge,
        Method::OptScalar,
        Method::OptDiag,
        Method::OptMatrix,
        Method::Plugin,
        Method::PluginL2,
        Method::PluginL1,
        Method::Rosenman,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Interventional => "interventional",
            Method::Observational => "observational",
            Method::Pooled => "pooled",
            Method::Ridge => "ridge",
            Method::OptScalar => "opt-scalar",
            Method::OptDiag => "opt-diag",
            Method::OptMatrix => "opt-matrix",
            Method::Plugin => "plugin",
            Method::PluginL2 => "plugin-l2",
            Method::PluginL1 => "plugin-l1",
            Method::Rosenman => "rosenman",
            Method::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnsupportedScheme(s.to_string()))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Default cross-validation grid: 13 logarithmically spaced lambdas over
/// 1e-3..=1e3.
pub fn default_cv_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

/// Tuning knobs for [`estimate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Lambda for the ridge weight scheme.
    pub ridge_lambda: f64,
    /// Stabilization for the plug-in schemes; `None` applies the default
    /// rule `1e-6 * (1 + ||Delta_hat||^2)`.
    pub epsilon: Option<f64>,
    /// Fixed penalty lambda for plugin-l2/plugin-l1; `None` selects by CV.
    pub penalty_lambda: Option<f64>,
    pub cv_folds: usize,
    pub cv_grid: Vec<f64>,
    pub cv_seed: u64,
    /// Set when the data carry a trailing intercept column; pins the
    /// intercept coordinate of every Delta estimate to zero.
    pub pin_intercept: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            ridge_lambda: 1.0,
            epsilon: None,
            penalty_lambda: None,
            cv_folds: 5,
            cv_grid: default_cv_grid(),
            cv_seed: 0,
            pin_intercept: false,
        }
    }
}

/// Ground-truth quantities enabling the oracle weight: the true bias and
/// the true estimator covariances for the realized designs.
#[derive(Debug, Clone)]
pub struct OracleInputs {
    pub delta: DVector<f64>,
    pub cov_obs: DMatrix<f64>,
    pub cov_int: DMatrix<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual_variance_obs: Option<f64>,
    pub residual_variance_int: Option<f64>,
    pub selected_lambda: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Result of a single estimation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    #[serde(with = "crate::serde_util::vector")]
    pub alpha_hat: DVector<f64>,
    pub weight: WeightMatrix,
    #[serde(with = "crate::serde_util::vector")]
    pub delta_hat: DVector<f64>,
    pub diagnostics: Diagnostics,
}

fn zero_fit(p: usize) -> FitResult {
    FitResult {
        coef: DVector::zeros(p),
        moment_inverse: None,
        residual_variance: 0.0,
        method: FitMethod::Ols,
        converged: true,
    }
}

fn pin(mut delta: DVector<f64>, pin_intercept: bool) -> DVector<f64> {
    if pin_intercept {
        let last = delta.len() - 1;
        delta[last] = 0.0;
    }
    delta
}

/// Runs the full estimation pipeline for one method.
///
/// `oracle` is consulted only by [`Method::Oracle`]; passing `None` there
/// is an error because the oracle weight needs ground truth.
pub fn estimate(
    method: Method,
    obs: &Dataset,
    int: &Dataset,
    oracle: Option<&OracleInputs>,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    if obs.dim() != int.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observational p = {} but interventional p = {}",
            obs.dim(),
            int.dim()
        )));
    }
    let p = int.dim();
    let mut diag = Diagnostics::default();

    // Regime-local methods first: they must not touch the other dataset.
    match method {
        Method::Interventional => {
            let fit_int = linmodel::fit_ols(int)?;
            diag.residual_variance_int = Some(fit_int.residual_variance);
            let weight = WeightMatrix {
                scheme: WeightScheme::Interventional,
                w: DMatrix::identity(p, p),
            };
            let alpha_hat = fit_int.coef.clone();
            return Ok(EstimateReport {
                method,
                alpha_hat,
                weight,
                delta_hat: DVector::zeros(p),
                diagnostics: diag,
            });
        }
        Method::Observational => {
            let fit_obs = linmodel::fit_ols(obs)?;
            diag.residual_variance_obs = Some(fit_obs.residual_variance);
            let weight = WeightMatrix {
                scheme: WeightScheme::Observational,
                w: DMatrix::zeros(p, p),
            };
            let alpha_hat = fit_obs.coef.clone();
            return Ok(EstimateReport {
                method,
                alpha_hat,
                weight,
                delta_hat: DVector::zeros(p),
                diagnostics: diag,
            });
        }
        Method::Ridge => {
            let fit_int = linmodel::fit_ols(int)?;
            diag.residual_variance_int = Some(fit_int.residual_variance);
            let weight = weighting::weight_ridge(int, opts.ridge_lambda)?;
            let alpha_hat = weighting::combine(&weight, &fit_int, &zero_fit(p))?;
            return Ok(EstimateReport {
                method,
                alpha_hat,
                weight,
                delta_hat: DVector::zeros(p),
                diagnostics: diag,
            });
        }
        _ => {}
    }

    let fit_obs = linmodel::fit_ols(obs)?;
    let fit_int = linmodel::fit_ols(int)?;
    diag.residual_variance_obs = Some(fit_obs.residual_variance);
    diag.residual_variance_int = Some(fit_int.residual_variance);

    let weight = match method {
        Method::Pooled => weighting::weight_pooled(obs, int)?,
        Method::Oracle => {
            let oracle = oracle.ok_or_else(|| {
                Error::UnsupportedScheme(
                    "oracle weight requires a known data-generating model".into(),
                )
            })?;
            weighting::optimal_weight_matrix(&oracle.cov_obs, &oracle.cov_int, &oracle.delta)?
        }
        _ => {
            let mut inputs = EstimatorInputs::from_fits(fit_obs.clone(), fit_int.clone())?;
            inputs.delta_hat = pin(inputs.delta_hat, opts.pin_intercept);
            match method {
                Method::OptScalar => {
                    let w = weighting::optimal_scalar_weight(
                        inputs.cov_obs_hat.trace(),
                        inputs.cov_int_hat.trace(),
                        inputs.delta_hat.norm_squared(),
                    )?;
                    WeightMatrix {
                        scheme: WeightScheme::OptimalScalar,
                        w: DMatrix::identity(p, p) * w,
                    }
                }
                Method::OptDiag => weighting::optimal_diagonal_weight(
                    &inputs.cov_obs_hat,
                    &inputs.cov_int_hat,
                    &inputs.delta_hat,
                )?,
                Method::OptMatrix => weighting::optimal_weight_matrix(
                    &inputs.cov_obs_hat,
                    &inputs.cov_int_hat,
                    &inputs.delta_hat,
                )?,
                Method::Plugin => {
                    let eps = opts
                        .epsilon
                        .unwrap_or_else(|| weighting::default_epsilon(&inputs.delta_hat));
                    diag.epsilon = Some(eps);
                    weighting::plugin_weight_matrix(&inputs, eps)?
                }
                Method::PluginL2 | Method::PluginL1 => {
                    let kind = if method == Method::PluginL2 {
                        PenaltyKind::L2
                    } else {
                        PenaltyKind::L1
                    };
                    let lambda = match opts.penalty_lambda {
                        Some(l) => l,
                        None => weighting::cross_validate_lambda(
                            &fit_obs,
                            int,
                            kind,
                            &opts.cv_grid,
                            opts.cv_folds,
                            opts.cv_seed,
                            opts.pin_intercept,
                        )?,
                    };
                    diag.selected_lambda = Some(lambda);
                    let delta = weighting::delta_hat_regularized(
                        &fit_obs,
                        int,
                        kind.penalty(lambda),
                        opts.pin_intercept,
                    )?;
                    let eps = opts
                        .epsilon
                        .unwrap_or_else(|| weighting::default_epsilon(&delta));
                    diag.epsilon = Some(eps);
                    let scheme = match kind.penalty(lambda) {
                        Penalty::L2 { lambda } => WeightScheme::PluginL2 {
                            lambda,
                            epsilon: eps,
                        },
                        Penalty::L1 { lambda } => WeightScheme::PluginL1 {
                            lambda,
                            epsilon: eps,
                        },
                    };
                    weighting::plugin_weight_with_delta(&inputs, &delta, eps, scheme)?
                }
                Method::Rosenman => weighting::rosenman_weight(&inputs)?,
                _ => unreachable!("handled above"),
            }
        }
    };

    let alpha_hat = weighting::combine(&weight, &fit_int, &fit_obs)?;
    let delta_hat = match method {
        Method::Oracle => oracle.unwrap().delta.clone(),
        Method::PluginL2 | Method::PluginL1 => {
            let kind = if method == Method::PluginL2 {
                PenaltyKind::L2
            } else {
                PenaltyKind::L1
            };
            let lambda = diag.selected_lambda.unwrap();
            weighting::delta_hat_regularized(
                &fit_obs,
                int,
                kind.penalty(lambda),
                opts.pin_intercept,
            )?
        }
        _ => pin(
            weighting::delta_hat_plain(&fit_obs, &fit_int)?,
            opts.pin_intercept,
        ),
    };
    Ok(EstimateReport {
        method,
        alpha_hat,
        weight,
        delta_hat,
        diagnostics: diag,
    })
}
