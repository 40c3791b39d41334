//! Independent checks for the engine and the importance metrics: the analytic
//! importance of the additive regression benchmark, a brute-force
//! finite-difference reimplementation of every metric, randomized gradient
//! checks and an ℓ1 logistic-regression baseline.

mod brute;
mod gradcheck;
mod logistic;
mod oracle;

pub use brute::{
    brute_force_metric_oracle, naive_dense_forward, naive_recurrent_forward, oracle_agreement_trials, AgreementSummary,
    MetricKind, OracleSubject,
};
pub use gradcheck::{gradient_check_trials, model_gradient_check, GradCheckSummary, TrialOutcome};
pub use logistic::{logistic_baseline_importance, LassoConfig, LogisticFit};
pub use oracle::{closed_form_importance, closed_form_raw, true_importance_oracle, OracleReport};

use thiserror::Error;

use crate::explain::ExplainError;

/// Floor on the denominator of [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("at least {min} draws are required, got {got}")]
    TooFewDraws { min: usize, got: usize },
    #[error("targets must be binary class labels 0/1")]
    NotBinary,
    #[error("no training rows")]
    NoRows,
    #[error(
        "lasso did not converge in {iterations} iterations (last change {last_change:.3e}, tolerance {tolerance:.1e})"
    )]
    NotConverged {
        iterations: usize,
        last_change: f64,
        tolerance: f64,
    },
    #[error("instance too large for the brute-force oracle: {0}")]
    TooLarge(String),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, RELATIVE_ERROR_FLOOR)`.
///
/// Vector-wise rather than per element, so entries that are tiny compared to
/// the rest do not dominate; the floor keeps two near-zero vectors comparable.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "compared vectors differ in length");
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return f64::INFINITY;
    }
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / inf(a).max(inf(b)).max(RELATIVE_ERROR_FLOOR)
}
