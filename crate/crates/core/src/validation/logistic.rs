use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::data::Dataset;
use crate::explain::{ImportanceReport, Metric, Scope};
use crate::tensor::Tensor2;
use crate::training::loss::Targets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// ℓ1 weight on the coefficients (the intercept is not penalized).
    pub penalty: f64,
    pub max_iterations: usize,
    /// Stop once no parameter moves by more than `tolerance · max(1, ‖θ‖∞)`.
    pub tolerance: f64,
    /// Seeds the power iteration that sizes the step.
    pub seed: u64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            penalty: 0.01,
            max_iterations: 20_000,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    /// Mean log-loss plus penalty at the solution.
    pub objective: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1]` by power iteration.
fn gram_norm(x: &Tensor2<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let p = x.cols();
    let mut v: Vec<f64> = (0..=p).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut estimate = 0.0;
    for _ in 0..200 {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let mut next = vec![0.0; p + 1];
        for r in 0..x.rows() {
            let row = x.row(r);
            let z: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[p];
            for (n, a) in next.iter_mut().zip(row) {
                *n += a * z;
            }
            next[p] += z;
        }
        let new_estimate: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = next;
        if (new_estimate - estimate).abs() <= 1e-10 * new_estimate.abs() {
            return new_estimate;
        }
        estimate = new_estimate;
    }
    estimate
}

/// Mean log-loss and its gradient at `theta` (coefficients then intercept).
fn loss_grad(x: &Tensor2<f64>, y: &[f64], theta: &[f64], grad: &mut [f64]) -> f64 {
    let p = x.cols();
    let n = x.rows() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for (r, &yr) in y.iter().enumerate() {
        let row = x.row(r);
        let z: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[p];
        total += softplus(z) - yr * z;
        let resid = sigmoid(z) - yr;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += resid * a;
        }
        grad[p] += resid;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    total / n
}

fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Fits an ℓ1-penalized logistic regression on the training rows by
/// accelerated proximal gradient and ranks features by `|coefficient|`.
///
/// Expects the inputs already encoded and standardized, as they are for the
/// network, so coefficient magnitudes are comparable.
pub fn logistic_baseline_importance(
    dataset: &Dataset,
    config: &LassoConfig,
) -> Result<(ImportanceReport, LogisticFit), ValidationError> {
    let Targets::Classes(classes) = &dataset.targets else {
        return Err(ValidationError::NotBinary);
    };
    let rows = dataset.fitting_rows();
    if rows.is_empty() {
        return Err(ValidationError::NoRows);
    }
    let x = dataset.features.select_rows(&rows);
    let y: Vec<f64> = rows
        .iter()
        .map(|&r| match classes[r] {
            0 => Ok(0.0),
            1 => Ok(1.0),
            _ => Err(ValidationError::NotBinary),
        })
        .collect::<Result<_, _>>()?;
    let p = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lipschitz = 1.01 * gram_norm(&x, &mut rng) / (4.0 * x.rows() as f64);
    let step = 1.0 / lipschitz.max(1e-12);
    let threshold = step * config.penalty;

    let mut theta = vec![0.0; p + 1];
    let mut prev = theta.clone();
    let mut momentum = theta.clone();
    let mut grad = vec![0.0; p + 1];
    let mut t = 1.0f64;
    let mut last_change = f64::INFINITY;
    for iteration in 1..=config.max_iterations {
        loss_grad(&x, &y, &momentum, &mut grad);
        prev.copy_from_slice(&theta);
        for j in 0..p {
            theta[j] = shrink(momentum[j] - step * grad[j], threshold);
        }
        theta[p] = momentum[p] - step * grad[p];
        let scale = theta.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        last_change = theta.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !last_change.is_finite() {
            break;
        }
        if last_change <= config.tolerance * scale {
            let mut scratch = vec![0.0; p + 1];
            let data_loss = loss_grad(&x, &y, &theta, &mut scratch);
            let coefficients = theta[..p].to_vec();
            let objective = data_loss + config.penalty * coefficients.iter().map(|c| c.abs()).sum::<f64>();
            let names = dataset.feature_names();
            let raw = coefficients.iter().map(|c| c.abs()).collect();
            let report = ImportanceReport::from_raw(Scope::Global, Metric::Iid, names.clone(), raw, rows.len())?
                .with_selector("abs_coefficient");
            return Ok((
                report,
                LogisticFit {
                    names,
                    coefficients,
                    intercept: theta[p],
                    iterations: iteration,
                    objective,
                },
            ));
        }
        // Restart the momentum whenever it points uphill.
        let uphill: f64 = (0..=p).map(|j| (momentum[j] - theta[j]) * (theta[j] - prev[j])).sum();
        if uphill > 0.0 {
            t = 1.0;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for j in 0..=p {
            momentum[j] = theta[j] + beta * (theta[j] - prev[j]);
        }
        t = t_next;
    }
    Err(ValidationError::NotConverged {
        iterations: config.max_iterations,
        last_change,
        tolerance: config.tolerance,
    })
}
