//! Non-zero-mean handling: per-regime centering of the treatment columns
//! (no scaling) and augmentation with a constant-one intercept column.
//!
//! Downstream, any Delta estimate on augmented data must have its intercept
//! coordinate pinned to zero; the weighting pipeline enforces this.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linmodel::Dataset;

/// Both regimes after centering and intercept augmentation.
#[derive(Debug, Clone)]
pub struct PreprocessedPair {
    /// Centered observational data with a trailing ones column (p+1 columns).
    pub obs: Dataset,
    /// Centered interventional data with a trailing ones column.
    pub int: Dataset,
    pub obs_mean: DVector<f64>,
    pub int_mean: DVector<f64>,
    pub augmented: bool,
}

fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (n, p) = x.shape();
    let mut means = DVector::zeros(p);
    let mut centered = x.clone();
    for j in 0..p {
        let mean = x.column(j).sum() / n as f64;
        means[j] = mean;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    (centered, means)
}

fn augment_ones(x: DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut out = DMatrix::zeros(n, p + 1);
    out.view_mut((0, 0), (n, p)).copy_from(&x);
    for i in 0..n {
        out[(i, p)] = 1.0;
    }
    out
}

/// Centers each regime's treatments by its own column means and appends a
/// constant-one column to both.
pub fn center_and_augment(obs: &Dataset, int: &Dataset) -> Result<PreprocessedPair> {
    if obs.dim() != int.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observational p = {} but interventional p = {}",
            obs.dim(),
            int.dim()
        )));
    }
    if obs.rows() == 0 || int.rows() == 0 {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let (obs_centered, obs_mean) = center_columns(&obs.x);
    let (int_centered, int_mean) = center_columns(&int.x);
    Ok(PreprocessedPair {
        obs: Dataset::new(augment_ones(obs_centered), obs.y.clone(), obs.regime)?,
        int: Dataset::new(augment_ones(int_centered), int.y.clone(), int.regime)?,
        obs_mean,
        int_mean,
        augmented: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{fit_ols, Regime};
    use crate::scm::{self, ScmParams};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn toy(x: DMatrix<f64>) -> Dataset {
        let y = DVector::from_fn(x.nrows(), |i, _| i as f64);
        Dataset::new(x, y, Regime::Observational).unwrap()
    }

    #[test]
    fn zero_mean_data_is_unchanged_except_ones_column() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, -1.0, 2.0, 3.0, -1.0, -3.0, 1.0]);
        let pair = center_and_augment(&toy(x.clone()), &toy(x.clone())).unwrap();
        assert_eq!(pair.obs.dim(), 3);
        for i in 0..4 {
            for j in 0..2 {
                assert_relative_eq!(pair.obs.x[(i, j)], x[(i, j)], epsilon = 1e-12);
            }
            assert_eq!(pair.obs.x[(i, 2)], 1.0);
        }
        assert_relative_eq!(pair.obs_mean.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn centering_is_translation_invariant() {
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 2 + j * 3) % 5) as f64);
        let mut shifted = x.clone();
        for i in 0..6 {
            shifted[(i, 0)] += 10.0;
            shifted[(i, 1)] -= 4.0;
        }
        let base = center_and_augment(&toy(x.clone()), &toy(x.clone())).unwrap();
        let moved = center_and_augment(&toy(shifted), &toy(x)).unwrap();
        assert_relative_eq!(base.obs.x, moved.obs.x, epsilon = 1e-12);
    }

    #[test]
    fn column_means_are_zero_after_centering() {
        let x = DMatrix::from_fn(9, 3, |i, j| ((i * 7 + j * 5) % 11) as f64 - 3.0);
        let pair = center_and_augment(&toy(x.clone()), &toy(x)).unwrap();
        for j in 0..3 {
            let mean = pair.obs.x.column(j).sum() / 9.0;
            assert!(mean.abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = toy(DMatrix::zeros(3, 2));
        let b = toy(DMatrix::zeros(3, 3));
        assert!(center_and_augment(&a, &b).is_err());
    }

    /// App. D intercept identity: with nonzero means the fitted intercept on
    /// interventional data is gamma' mu_NZ + mu_NY.
    #[test]
    fn fitted_intercept_matches_identity() {
        let params = ScmParams {
            b: DMatrix::from_row_slice(2, 1, &[1.0, -0.5]),
            gamma: DVector::from_element(1, 1.0),
            alpha: DVector::from_row_slice(&[2.0, -1.0]),
            sigma_nz: DMatrix::identity(1, 1),
            sigma_nx: DMatrix::identity(2, 2),
            var_ny: 1.0,
            mu_nz: DVector::from_element(1, 1.0),
            mu_nx: DVector::from_row_slice(&[0.5, -0.25]),
            mu_ny: 2.0,
            intervention_cov: DMatrix::identity(2, 2),
            intervention_mean: DVector::from_row_slice(&[0.3, 0.6]),
        };
        let n = 1_000_000;
        let obs = scm::sample_observational(&params, 1000, 1).unwrap();
        let int = scm::sample_interventional(&params, n, 2).unwrap();
        let pair = center_and_augment(&obs, &int).unwrap();
        let fit = fit_ols(&pair.int).unwrap();
        let intercept = fit.coef[2];
        let expected = params.gamma[0] * params.mu_nz[0] + params.mu_ny; // = 3
        let se = fit.coef_covariance().unwrap()[(2, 2)].sqrt();
        assert!(
            (intercept - expected).abs() < 3.0 * se,
            "intercept {intercept} vs {expected} (se {se})"
        );
    }
}
