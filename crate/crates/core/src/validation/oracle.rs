use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ValidationError;

const MIN_DRAWS: usize = 10_000;

/// RMS of each true partial derivative of the benchmark regression function
/// under standard normal inputs: `E[sin² X] = (1 − e⁻²)/2`,
/// `E[cos² X] = (1 + e⁻²)/2`, and the three constant slopes.
pub fn closed_form_raw() -> [f64; 5] {
    let e2 = (-2.0f64).exp();
    [((1.0 - e2) / 2.0).sqrt(), ((1.0 + e2) / 2.0).sqrt(), 2.0, 1.0, 0.01]
}

/// [`closed_form_raw`] normalized to percentages.
pub fn closed_form_importance() -> [f64; 5] {
    let raw = closed_form_raw();
    let c: f64 = raw.iter().sum();
    raw.map(|r| 100.0 * (r / c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub names: Vec<String>,
    /// Monte-Carlo percentages.
    pub lambda: Vec<f64>,
    /// Monte-Carlo RMS of each derivative.
    pub raw: Vec<f64>,
    /// Delta-method standard errors of `lambda`; X1 and X2 are drawn
    /// independently, so only their variances enter.
    pub standard_errors: Vec<f64>,
    /// Limit values for infinitely many draws.
    pub closed_form: Vec<f64>,
    pub n_draws: usize,
    pub seed: u64,
}

/// Monte-Carlo estimate of the benchmark's true importance, applying the
/// global formula to the analytic derivatives `(−sin X1, cos X2, 2, 1, 0.01)`.
pub fn true_importance_oracle(n_draws: usize, seed: u64) -> Result<OracleReport, ValidationError> {
    if n_draws < MIN_DRAWS {
        return Err(ValidationError::TooFewDraws {
            min: MIN_DRAWS,
            got: n_draws,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_draws as f64;
    // Running sums of d² and d⁴ for the two varying derivatives.
    let (mut s1, mut q1, mut s2, mut q2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_draws {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let d1 = x1.sin() * x1.sin();
        let d2 = x2.cos() * x2.cos();
        s1 += d1;
        q1 += d1 * d1;
        s2 += d2;
        q2 += d2 * d2;
    }
    let (m1, m2) = (s1 / n, s2 / n);
    let raw = vec![m1.sqrt(), m2.sqrt(), 2.0, 1.0, 0.01];
    let c: f64 = raw.iter().sum();
    let lambda = raw.iter().map(|r| 100.0 * (r / c)).collect();
    // se(mean d²) = sd(d²)/√n, and d√m/dm = 1/(2√m).
    let se_raw = |m: f64, q: f64| {
        let var = (q / n - m * m).max(0.0) * n / (n - 1.0);
        (var / n).sqrt() / (2.0 * m.sqrt())
    };
    let se = [se_raw(m1, q1), se_raw(m2, q2)];
    // ∂λ_j/∂r_k = 100 (δ_jk C − r_j) / C²
    let standard_errors = (0..5)
        .map(|j| {
            let var: f64 = (0..2)
                .map(|k| {
                    let delta = if j == k { c } else { 0.0 };
                    let d = 100.0 * (delta - raw[j]) / (c * c);
                    d * d * se[k] * se[k]
                })
                .sum();
            var.sqrt()
        })
        .collect();
    Ok(OracleReport {
        names: (1..=5).map(|j| format!("X{j}")).collect(),
        lambda,
        raw,
        standard_errors,
        closed_form: closed_form_importance().to_vec(),
        n_draws,
        seed,
    })
}
