//! Monte Carlo harness: repeated draws from a linear SCM, one squared error
//! per estimation method per replication, deterministic under a master seed.
//!
//! Also houses the sample-size sweeps behind the benchmark figures and the
//! weight-convergence diagnostics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::{self, EstimateOptions, Method, OracleInputs};
use crate::scm::{self, Confounding, ScmParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Where each replication's SCM comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ScmSource {
    /// The benchmark family: p=30, one confounder, coefficients redrawn
    /// every replication.
    Table1 {
        confounding: Confounding,
        gamma_scale: f64,
    },
    /// A fixed user-supplied model, reused across replications.
    Custom { params: ScmParams },
}

impl ScmSource {
    pub fn treatment_dim(&self) -> usize {
        match self {
            ScmSource::Table1 { .. } => scm::TABLE1_TREATMENT_DIM,
            ScmSource::Custom { params } => params.treatment_dim(),
        }
    }

    fn params_for_replication(&self, seed: u64) -> ScmParams {
        match self {
            ScmSource::Table1 {
                confounding,
                gamma_scale,
            } => scm::table1_params(*confounding, *gamma_scale, seed),
            ScmSource::Custom { params } => params.clone(),
        }
    }
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_ridge_lambda() -> f64 {
    1.0
}

fn default_cv_folds() -> usize {
    5
}

/// Harness-level tuning knobs, all with serde defaults so configs can stay
/// minimal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnessOptions {
    #[serde(default = "default_ridge_lambda")]
    pub ridge_lambda: f64,
    /// Plug-in stabilization; `None` means the relative default rule.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Fixed penalty lambda; `None` selects by cross-validation.
    #[serde(default)]
    pub penalty_lambda: Option<f64>,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "pipeline::default_cv_grid")]
    pub cv_grid: Vec<f64>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            ridge_lambda: default_ridge_lambda(),
            epsilon: None,
            penalty_lambda: None,
            cv_folds: default_cv_folds(),
            cv_grid: pipeline::default_cv_grid(),
        }
    }
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub scm: ScmSource,
    /// Observational sample size.
    pub n: usize,
    /// Interventional sample size.
    pub m: usize,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Target limit of n(m)/m for sample-size sweeps.
    #[serde(default)]
    pub ratio_c: Option<f64>,
    #[serde(default)]
    pub options: HarnessOptions,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = self.scm.treatment_dim();
        if self.n < p + 1 || self.m < p + 1 {
            return Err(Error::InsufficientData(format!(
                "need n, m >= p + 1 = {}; got n = {}, m = {}",
                p + 1,
                self.n,
                self.m
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods requested".into()));
        }
        if let ScmSource::Custom { params } = &self.scm {
            params.validate()?;
        }
        Ok(())
    }
}

/// Per-method summary over successful replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodStats {
    pub mean_mse: f64,
    /// Sample standard deviation of the per-replication squared errors.
    pub std_mse: f64,
    pub per_replication: Vec<f64>,
}

impl MethodStats {
    fn from_values(values: Vec<f64>) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean_mse: mean,
            std_mse: std,
            per_replication: values,
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std_mse / (self.per_replication.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseReport {
    pub config: ExperimentConfig,
    pub failed_trials: usize,
    pub per_method: BTreeMap<String, MethodStats>,
}

/// Independent sub-seeds for one replication, derived deterministically
/// from (master_seed, replication_index).
fn trial_seeds(master_seed: u64, replication_index: u64) -> [u64; 4] {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&replication_index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    [rng.random(), rng.random(), rng.random(), rng.random()]
}

/// True-covariance oracle inputs for the realized designs.
fn oracle_inputs(
    obs_x: &DMatrix<f64>,
    int_x: &DMatrix<f64>,
    truth: &scm::GroundTruth,
) -> Result<OracleInputs> {
    let cov_obs = linalg::spd_inverse(&obs_x.tr_mul(obs_x))? * truth.var_y_given_x_obs;
    let cov_int = linalg::spd_inverse(&int_x.tr_mul(int_x))? * truth.var_y_given_do;
    Ok(OracleInputs {
        delta: truth.delta.clone(),
        cov_obs,
        cov_int,
    })
}

/// Runs one replication and returns the squared error per method.
pub fn run_trial(config: &ExperimentConfig, replication_index: u64) -> Result<BTreeMap<String, f64>> {
    config.validate()?;
    let [param_seed, obs_seed, int_seed, cv_seed] =
        trial_seeds(config.master_seed, replication_index);
    let params = config.scm.params_for_replication(param_seed);
    let truth = scm::ground_truth(&params)?;
    let obs = scm::sample_observational(&params, config.n, obs_seed)?;
    let int = scm::sample_interventional(&params, config.m, int_seed)?;

    let needs_oracle = config.methods.contains(&Method::Oracle);
    let oracle = if needs_oracle {
        Some(oracle_inputs(&obs.x, &int.x, &truth)?)
    } else {
        None
    };

    let opts = EstimateOptions {
        ridge_lambda: config.options.ridge_lambda,
        epsilon: config.options.epsilon,
        penalty_lambda: config.options.penalty_lambda,
        cv_folds: config.options.cv_folds,
        cv_grid: config.options.cv_grid.clone(),
        cv_seed,
        pin_intercept: false,
    };

    let mut out = BTreeMap::new();
    for &method in &config.methods {
        let report = pipeline::estimate(method, &obs, &int, oracle.as_ref(), &opts)?;
        let err = (&report.alpha_hat - &params.alpha).norm_squared();
        out.insert(method.name().to_string(), err);
    }
    Ok(out)
}

/// Runs all replications (in parallel) and aggregates.
///
/// Failed replications are dropped and counted; more than 1% failures is an
/// error. Aggregation is by replication index, so the report is
/// byte-identical across runs and thread counts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MseReport> {
    config.validate()?;
    let trials: Vec<Result<BTreeMap<String, f64>>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect();

    let total = config.replications;
    let failed = trials.iter().filter(|t| t.is_err()).count();
    if failed * 100 > total {
        return Err(Error::ExcessiveFailures { failed, total });
    }

    let mut per_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for trial in trials.into_iter().flatten() {
        for (name, err) in trial {
            per_method.entry(name).or_default().push(err);
        }
    }
    Ok(MseReport {
        config: config.clone(),
        failed_trials: failed,
        per_method: per_method
            .into_iter()
            .map(|(name, values)| (name, MethodStats::from_values(values)))
            .collect(),
    })
}

/// One experiment per interventional size `m`, with `n = round(ratio * m)`.
pub fn sweep_sample_size(
    base: &ExperimentConfig,
    m_grid: &[usize],
    ratio: f64,
) -> Result<Vec<MseReport>> {
    if ratio <= 0.0 || ratio.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "sweep ratio must be positive, got {ratio}"
        )));
    }
    m_grid
        .iter()
        .map(|&m| {
            let mut config = base.clone();
            config.m = m;
            config.n = (ratio * m as f64).round() as usize;
            config.ratio_c = Some(ratio);
            run_experiment(&config)
        })
        .collect()
}

/// One experiment per observational size `n`, keeping `m` fixed.
pub fn sweep_ratio(base: &ExperimentConfig, n_grid: &[usize]) -> Result<Vec<MseReport>> {
    n_grid
        .iter()
        .map(|&n| {
            let mut config = base.clone();
            config.n = n;
            run_experiment(&config)
        })
        .collect()
}

/// Median spectral distance of the plug-in weight from the identity, per
/// sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub median_distance: f64,
}

/// Tracks how fast the plug-in optimal weight approaches `I` as both
/// sample sizes grow.
pub fn check_weight_convergence(
    params: &ScmParams,
    sizes: &[(usize, usize)],
    epsilon: Option<f64>,
    replications: usize,
    master_seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    params.validate()?;
    let p = params.treatment_dim();
    let identity = DMatrix::identity(p, p);
    let mut rows = Vec::with_capacity(sizes.len());
    for (size_index, &(n, m)) in sizes.iter().enumerate() {
        let distances: Vec<Result<f64>> = (0..replications as u64)
            .into_par_iter()
            .map(|rep| {
                let [_, obs_seed, int_seed, _] =
                    trial_seeds(master_seed.wrapping_add(size_index as u64), rep);
                let obs = scm::sample_observational(params, n, obs_seed)?;
                let int = scm::sample_interventional(params, m, int_seed)?;
                let fit_obs = crate::linmodel::fit_ols(&obs)?;
                let fit_int = crate::linmodel::fit_ols(&int)?;
                let inputs = crate::weighting::EstimatorInputs::from_fits(fit_obs, fit_int)?;
                let eps =
                    epsilon.unwrap_or_else(|| crate::weighting::default_epsilon(&inputs.delta_hat));
                let w = crate::weighting::plugin_weight_matrix(&inputs, eps)?;
                Ok(linalg::spectral_norm(&(&w.w - &identity)))
            })
            .collect();
        let mut distances = distances.into_iter().collect::<Result<Vec<f64>>>()?;
        distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = distances.len() / 2;
        let median = if distances.len() % 2 == 1 {
            distances[mid]
        } else {
            0.5 * (distances[mid - 1] + distances[mid])
        };
        rows.push(ConvergenceRow {
            n,
            m,
            median_distance: median,
        });
    }
    Ok(rows)
}

/// Fixed-m, growing-n limit of the oracle weight: with the observational
/// covariance vanishing, `W* -> Delta Delta' (Cov_I + Delta Delta')^{-1}`.
pub fn imbalance_limit_matrix(
    delta: &DVector<f64>,
    cov_int: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let outer = delta * delta.transpose();
    let denom = cov_int + &outer;
    linalg::check_nonsingular(&denom, "Cov_I + Delta Delta'")?;
    linalg::solve_right(&outer, &denom)
}

/// Flattens a report to `scheme,replication,squared_error` CSV with full
/// round-trip precision.
pub fn report_to_csv(report: &MseReport) -> String {
    let mut out = String::from("scheme,replication,squared_error\n");
    for (name, stats) in &report.per_method {
        for (i, err) in stats.per_replication.iter().enumerate() {
            out.push_str(&format!("{name},{i},{}\n", format_float(*err)));
        }
    }
    out
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_params(gamma: f64, var_ny: f64) -> ScmParams {
        ScmParams {
            b: DMatrix::from_row_slice(3, 1, &[1.0, -0.5, 0.25]),
            gamma: DVector::from_element(1, gamma),
            alpha: DVector::from_row_slice(&[2.0, -1.0, 0.5]),
            sigma_nz: DMatrix::identity(1, 1),
            sigma_nx: DMatrix::identity(3, 3),
            var_ny,
            mu_nz: DVector::zeros(1),
            mu_nx: DVector::zeros(3),
            mu_ny: 0.0,
            intervention_cov: DMatrix::identity(3, 3),
            intervention_mean: DVector::zeros(3),
        }
    }

    fn small_config(gamma: f64, var_ny: f64, methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            scm: ScmSource::Custom {
                params: small_params(gamma, var_ny),
            },
            n: 80,
            m: 40,
            replications: 5,
            methods,
            master_seed: 42,
            ratio_c: None,
            options: HarnessOptions::default(),
        }
    }

    #[test]
    fn noiseless_interventional_recovers_alpha_exactly() {
        let config = small_config(0.0, 1e-12, vec![Method::Interventional]);
        let trial = run_trial(&config, 0).unwrap();
        assert!(trial["interventional"] < 1e-8);
    }

    #[test]
    fn trial_is_deterministic() {
        let config = small_config(1.0, 1.0, vec![Method::Pooled, Method::Plugin]);
        let a = run_trial(&config, 3).unwrap();
        let b = run_trial(&config, 3).unwrap();
        assert_eq!(a, b);
        let c = run_trial(&config, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let mut config = small_config(1.0, 1.0, vec![Method::Pooled]);
        config.n = 3;
        assert!(matches!(
            config.validate(),
            Err(Error::InsufficientData(_))
        ));
        let mut config = small_config(1.0, 1.0, vec![]);
        config.replications = 0;
        assert!(config.validate().is_err());
        let mut config = small_config(1.0, 1.0, vec![Method::Pooled]);
        config.schema_version = 99;
        assert!(config.validate().is_err());
    }

    #[test]
    fn stats_match_per_replication_values() {
        let config = small_config(1.0, 1.0, vec![Method::Interventional, Method::Oracle]);
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.failed_trials, 0);
        for stats in report.per_method.values() {
            let recomputed = MethodStats::from_values(stats.per_replication.clone());
            assert!((recomputed.mean_mse - stats.mean_mse).abs() < 1e-10);
            assert!((recomputed.std_mse - stats.std_mse).abs() < 1e-10);
            assert!(stats.per_replication.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn report_is_byte_identical_across_runs() {
        let config = small_config(2.0, 1.0, vec![Method::Pooled, Method::PluginL2]);
        let a = serde_json::to_vec(&run_experiment(&config).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_experiment(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    /// At the high-dimensional benchmark settings the oracle weight wins
    /// almost every single trial, not just in expectation.
    #[test]
    fn oracle_beats_interventional_usually() {
        let config = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            scm: ScmSource::Table1 {
                confounding: Confounding::Spread,
                gamma_scale: 1.0,
            },
            n: 600,
            m: 300,
            replications: 200,
            methods: vec![Method::Interventional, Method::Oracle],
            master_seed: 11,
            ratio_c: None,
            options: HarnessOptions::default(),
        };
        let report = run_experiment(&config).unwrap();
        let int = &report.per_method["interventional"].per_replication;
        let orc = &report.per_method["oracle"].per_replication;
        let wins = int.iter().zip(orc).filter(|(i, o)| o <= i).count();
        assert!(
            wins * 100 >= 95 * config.replications,
            "oracle won only {wins}/{} trials",
            config.replications
        );
    }

    #[test]
    fn sweep_sample_size_sets_n_from_ratio() {
        let mut base = small_config(1.0, 1.0, vec![Method::Interventional]);
        base.replications = 2;
        let reports = sweep_sample_size(&base, &[10, 20], 3.0).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].config.m, 10);
        assert_eq!(reports[0].config.n, 30);
        assert_eq!(reports[1].config.n, 60);
        assert!(sweep_sample_size(&base, &[10], 0.0).is_err());
    }

    #[test]
    fn sweep_ratio_keeps_m_fixed() {
        let mut base = small_config(1.0, 1.0, vec![Method::Interventional]);
        base.replications = 2;
        let reports = sweep_ratio(&base, &[50, 100]).unwrap();
        assert_eq!(reports[0].config.n, 50);
        assert_eq!(reports[1].config.n, 100);
        assert!(reports.iter().all(|r| r.config.m == base.m));
    }

    #[test]
    fn csv_shape_and_precision() {
        let config = small_config(1.0, 1.0, vec![Method::Pooled]);
        let report = run_experiment(&config).unwrap();
        let csv = report_to_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("scheme,replication,squared_error"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 5);
        for (i, row) in rows.iter().enumerate() {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields[0], "pooled");
            assert_eq!(fields[1], i.to_string());
            let parsed: f64 = fields[2].parse().unwrap();
            assert_eq!(parsed, report.per_method["pooled"].per_replication[i]);
        }
    }

    #[test]
    fn format_float_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.79e-3, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn convergence_rows_decrease_on_growing_samples() {
        let params = small_params(2.0, 1.0);
        let rows = check_weight_convergence(
            &params,
            &[(40, 20), (400, 200), (4000, 2000)],
            None,
            20,
            7,
        )
        .unwrap();
        assert!(rows[0].median_distance > rows[1].median_distance);
        assert!(rows[1].median_distance > rows[2].median_distance);
    }

    #[test]
    fn imbalance_limit_is_projection_like_for_large_delta() {
        // With Cov_I tiny relative to Delta, the limit approaches the
        // projector onto Delta.
        let delta = DVector::from_row_slice(&[3.0, 4.0]);
        let cov = DMatrix::identity(2, 2) * 1e-6;
        let lim = imbalance_limit_matrix(&delta, &cov).unwrap();
        let proj = &delta * delta.transpose() / delta.norm_squared();
        assert_relative_eq!(lim, proj, epsilon = 1e-5);
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let json = r#"{
            "scm": {"source": "table1", "confounding": "spread", "gamma_scale": 1.0},
            "n": 600, "m": 300, "replications": 10,
            "methods": ["interventional", "pooled", "plugin"],
            "master_seed": 1
        }"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.schema_version, SCHEMA_VERSION);
        assert_eq!(config.options.cv_folds, 5);
        assert_eq!(config.options.cv_grid.len(), 13);
        assert_eq!(config.scm.treatment_dim(), 30);
        config.validate().unwrap();
    }
}
