//! Combining observational and interventional data for linear causal effect
//! estimation.
//!
//! Observational OLS of the outcome on the treatments is biased by hidden
//! confounding but has low variance; OLS on (typically far fewer)
//! interventional samples is unbiased but noisy. This crate combines the two
//! with a matrix weight, `alpha_hat_W = W alpha_hat_I + (I - W) alpha_hat_O`,
//! and provides the MSE-optimal weight constructions, their plug-in
//! estimates, and a Monte Carlo harness for comparing them on simulated
//! linear structural causal models.

pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod linmodel;
pub mod pipeline;
pub mod preprocess;
pub mod scm;
pub mod serde_util;
pub mod weighting;

pub use error::{Error, Result};
