//! Linear Gaussian structural equation model: parameterization, seeded
//! sampling of both regimes, and closed-form ground-truth quantities.
//!
//! The model is
//!   Z <- N_Z,  X <- B Z + N_X,  Y <- Z'gamma + X'alpha + N_Y
//! with mutually independent Gaussian noises. The interventional regime
//! replaces the X assignment by an independent draw X <- N~_X.
//!
//! Sampling uses the ChaCha8 stream cipher as PRNG (`rand_chacha`), so a
//! given (params, size, seed) triple is bit-stable within this
//! implementation. Cross-language ports should document their own stream.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::linmodel::{Dataset, Regime};
use crate::serde_util;

/// Full parameterization of the SEM, covering both regimes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmParams {
    /// Confounder-to-treatment loading, p x d.
    #[serde(rename = "B", with = "serde_util::matrix")]
    pub b: DMatrix<f64>,
    /// Confounder-to-outcome coefficients, length d.
    #[serde(with = "serde_util::vector")]
    pub gamma: DVector<f64>,
    /// Causal effect, length p.
    #[serde(with = "serde_util::vector")]
    pub alpha: DVector<f64>,
    /// Covariance of N_Z, d x d, positive semidefinite.
    #[serde(with = "serde_util::matrix")]
    pub sigma_nz: DMatrix<f64>,
    /// Covariance of N_X, p x p, positive definite.
    #[serde(with = "serde_util::matrix")]
    pub sigma_nx: DMatrix<f64>,
    /// Variance of N_Y, positive.
    pub var_ny: f64,
    #[serde(with = "serde_util::vector")]
    pub mu_nz: DVector<f64>,
    #[serde(with = "serde_util::vector")]
    pub mu_nx: DVector<f64>,
    pub mu_ny: f64,
    /// Covariance of the interventional treatment draw N~_X, p x p.
    #[serde(with = "serde_util::matrix")]
    pub intervention_cov: DMatrix<f64>,
    #[serde(with = "serde_util::vector")]
    pub intervention_mean: DVector<f64>,
}

impl ScmParams {
    pub fn treatment_dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn confounder_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, d) = (self.treatment_dim(), self.confounder_dim());
        let dims_ok = self.gamma.len() == d
            && self.alpha.len() == p
            && self.sigma_nz.shape() == (d, d)
            && self.sigma_nx.shape() == (p, p)
            && self.mu_nz.len() == d
            && self.mu_nx.len() == p
            && self.intervention_cov.shape() == (p, p)
            && self.intervention_mean.len() == p;
        if !dims_ok {
            return Err(Error::DimensionMismatch(
                "SCM parameter dimensions are inconsistent".into(),
            ));
        }
        if self.var_ny <= 0.0 || self.var_ny.is_nan() {
            return Err(Error::InvalidParameter("var_ny must be positive".into()));
        }
        for (name, m) in [
            ("sigma_nz", &self.sigma_nz),
            ("sigma_nx", &self.sigma_nx),
            ("intervention_cov", &self.intervention_cov),
        ] {
            if linalg::symmetry_defect(m) > 1e-8 {
                return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
            }
            let min_eig = m
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let strict = name != "sigma_nz";
            if min_eig < -1e-10 || (strict && min_eig <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} is not positive {}definite (min eigenvalue {min_eig:.3e})",
                    if strict { "" } else { "semi" }
                )));
            }
        }
        Ok(())
    }
}

/// Population quantities used as oracles in tests and for the oracle weight
/// matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Confounding bias Delta.
    #[serde(with = "serde_util::vector")]
    pub delta: DVector<f64>,
    /// Var(Y | X) under the observational distribution.
    pub var_y_given_x_obs: f64,
    /// Var(Y | do(X)).
    pub var_y_given_do: f64,
    /// Population covariance of X under the observational distribution.
    #[serde(with = "serde_util::matrix")]
    pub cov_x_obs: DMatrix<f64>,
}

/// Closed-form ground truth:
///   Delta       = (Sigma_NX + B Sigma_NZ B')^{-1} B Sigma_NZ gamma
///   cov_x_obs   = B Sigma_NZ B' + Sigma_NX
///   Var(Y|do)   = gamma' Sigma_NZ gamma + var_ny
///   Var(Y|X)    = var_ny + gamma' (Sigma_NZ - Sigma_NZ B' cov^{-1} B Sigma_NZ) gamma
/// The last line is Gaussian conditioning of Z on X.
pub fn ground_truth(params: &ScmParams) -> Result<GroundTruth> {
    params.validate()?;
    let bsz = &params.b * &params.sigma_nz;
    let cov_x_obs = &bsz * params.b.transpose() + &params.sigma_nx;
    linalg::check_nonsingular(&cov_x_obs, "Sigma_NX + B Sigma_NZ B'")?;
    let delta = linalg::spd_solve_vec(&cov_x_obs, &(&bsz * &params.gamma))?;
    let var_y_given_do =
        (params.gamma.transpose() * &params.sigma_nz * &params.gamma)[(0, 0)] + params.var_ny;
    let cond_cov_z =
        &params.sigma_nz - bsz.transpose() * linalg::spd_solve(&cov_x_obs, &bsz)?;
    let var_y_given_x_obs =
        params.var_ny + (params.gamma.transpose() * cond_cov_z * &params.gamma)[(0, 0)];
    Ok(GroundTruth {
        delta,
        var_y_given_x_obs,
        var_y_given_do,
        cov_x_obs,
    })
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Draws `n` rows from N(mean, factor factor'), standard normals row by row.
fn gaussian_rows(
    rng: &mut ChaCha8Rng,
    n: usize,
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dim = mean.len();
    let z = standard_normal_matrix(rng, n, factor.ncols());
    let mut out = z * factor.transpose();
    for i in 0..n {
        for j in 0..dim {
            out[(i, j)] += mean[j];
        }
    }
    out
}

struct ObservationalDraw {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

fn draw_observational(params: &ScmParams, n: usize, seed: u64) -> Result<ObservationalDraw> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_factor = linalg::psd_factor(&params.sigma_nz)?;
    let x_factor = linalg::psd_factor(&params.sigma_nx)?;
    let z = gaussian_rows(&mut rng, n, &params.mu_nz, &z_factor);
    let n_x = gaussian_rows(&mut rng, n, &params.mu_nx, &x_factor);
    let x = &z * params.b.transpose() + n_x;
    let sd_y = params.var_ny.sqrt();
    let mut y = &z * &params.gamma + &x * &params.alpha;
    for v in y.iter_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        *v += params.mu_ny + sd_y * noise;
    }
    Ok(ObservationalDraw { x, y })
}

/// Samples `n` i.i.d. observational draws of (X, Y); the confounder is
/// discarded. Identical seeds give bit-identical output.
pub fn sample_observational(params: &ScmParams, n: usize, seed: u64) -> Result<Dataset> {
    let draw = draw_observational(params, n, seed)?;
    Dataset::new(draw.x, draw.y, Regime::Observational)
}

struct InterventionalDraw {
    #[cfg_attr(not(test), allow(dead_code))]
    z: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DVector<f64>,
}

fn draw_interventional(params: &ScmParams, m: usize, seed: u64) -> Result<InterventionalDraw> {
    params.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_factor = linalg::psd_factor(&params.sigma_nz)?;
    let x_factor = linalg::psd_factor(&params.intervention_cov)?;
    let z = gaussian_rows(&mut rng, m, &params.mu_nz, &z_factor);
    let x = gaussian_rows(&mut rng, m, &params.intervention_mean, &x_factor);
    let sd_y = params.var_ny.sqrt();
    let mut y = &z * &params.gamma + &x * &params.alpha;
    for v in y.iter_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        *v += params.mu_ny + sd_y * noise;
    }
    Ok(InterventionalDraw { z, x, y })
}

/// Samples `m` i.i.d. interventional draws: X is drawn independently of the
/// confounder from N(intervention_mean, intervention_cov).
pub fn sample_interventional(params: &ScmParams, m: usize, seed: u64) -> Result<Dataset> {
    let draw = draw_interventional(params, m, seed)?;
    Dataset::new(draw.x, draw.y, Regime::Interventional)
}

/// Accumulates the observational moment matrix X'X over `n` draws without
/// materializing the full sample; used for very large `n`.
pub fn observational_moment(params: &ScmParams, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    params.validate()?;
    let p = params.treatment_dim();
    let mut acc = DMatrix::zeros(p, p);
    let chunk = 50_000;
    let mut remaining = n;
    let mut chunk_index = 0u64;
    while remaining > 0 {
        let take = remaining.min(chunk);
        // Distinct sub-seed per chunk keeps the stream layout simple.
        let draw = draw_observational(params, take, seed.wrapping_add(chunk_index))?;
        acc += draw.x.tr_mul(&draw.x);
        remaining -= take;
        chunk_index += 1;
    }
    Ok(acc)
}

/// Confounding layout for the benchmark setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confounding {
    /// b ~ N(0, I_p): every treatment is confounded.
    Spread,
    /// Only the first five entries of b are nonzero.
    Sparse,
}

/// Benchmark SEM: p = 30 treatments, a scalar confounder, unit noise
/// (co)variances, alpha ~ N(0, 9 I_p), and the interventional treatment
/// drawn from N(0, Cov(X_obs)) with the population covariance.
pub const TABLE1_TREATMENT_DIM: usize = 30;

pub fn table1_params(confounding: Confounding, gamma_scale: f64, seed: u64) -> ScmParams {
    let p = TABLE1_TREATMENT_DIM;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(p, 1, |i, _| {
        let confounded = match confounding {
            Confounding::Spread => true,
            Confounding::Sparse => i < 5,
        };
        if confounded {
            rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    });
    let alpha = DVector::from_fn(p, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    let sigma_nx = DMatrix::identity(p, p);
    let cov_x_obs = &b * b.transpose() + &sigma_nx;
    ScmParams {
        gamma: DVector::from_element(1, gamma_scale),
        alpha,
        sigma_nz: DMatrix::identity(1, 1),
        sigma_nx,
        var_ny: 1.0,
        mu_nz: DVector::zeros(1),
        mu_nx: DVector::zeros(p),
        mu_ny: 0.0,
        intervention_cov: cov_x_obs,
        intervention_mean: DVector::zeros(p),
        b,
    }
}
