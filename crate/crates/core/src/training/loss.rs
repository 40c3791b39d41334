use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Probability floor inside the cross-entropy logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over every output entry of the squared error.
    Mse,
    /// Mean negative log-probability of the true class; predictions are probabilities.
    CrossEntropy,
}

/// Supervision attached to a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets<T> {
    /// `n x outputs` real targets.
    Regression(Tensor2<T>),
    /// One class index per row.
    Classes(Vec<usize>),
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("{kind:?} loss: {predictions} prediction rows but {targets} targets")]
    RowMismatch {
        kind: LossKind,
        predictions: usize,
        targets: usize,
    },
    #[error("mse loss: predictions have {predictions} columns, targets {targets}")]
    WidthMismatch { predictions: usize, targets: usize },
    #[error("class index {class} out of range for {outputs} outputs")]
    ClassOutOfRange { class: usize, outputs: usize },
    #[error("{0:?} loss does not accept these targets")]
    WrongTargetKind(LossKind),
    #[error("empty batch")]
    Empty,
}

impl<T: Scalar> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(t) => t.rows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        match self {
            Targets::Regression(t) => Targets::Regression(t.select_rows(rows)),
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Targets<U> {
        match self {
            Targets::Regression(t) => Targets::Regression(t.cast()),
            Targets::Classes(c) => Targets::Classes(c.clone()),
        }
    }

    pub fn natural_loss(&self) -> LossKind {
        match self {
            Targets::Regression(_) => LossKind::Mse,
            Targets::Classes(_) => LossKind::CrossEntropy,
        }
    }
}

fn check<T: Scalar>(kind: LossKind, predictions: &Tensor2<T>, targets: &Targets<T>) -> Result<(), LossError> {
    if predictions.rows() != targets.len() {
        return Err(LossError::RowMismatch {
            kind,
            predictions: predictions.rows(),
            targets: targets.len(),
        });
    }
    if predictions.rows() == 0 {
        return Err(LossError::Empty);
    }
    match (kind, targets) {
        (LossKind::Mse, Targets::Regression(t)) => {
            if t.cols() != predictions.cols() {
                return Err(LossError::WidthMismatch {
                    predictions: predictions.cols(),
                    targets: t.cols(),
                });
            }
        }
        (LossKind::CrossEntropy, Targets::Classes(c)) => {
            if let Some(&class) = c.iter().find(|&&c| c >= predictions.cols()) {
                return Err(LossError::ClassOutOfRange {
                    class,
                    outputs: predictions.cols(),
                });
            }
        }
        _ => return Err(LossError::WrongTargetKind(kind)),
    }
    Ok(())
}

/// Mean loss over the batch.
pub fn loss<T: Scalar>(kind: LossKind, predictions: &Tensor2<T>, targets: &Targets<T>) -> Result<T, LossError> {
    loss_and_gradient(kind, predictions, targets).map(|(value, _)| value)
}

/// Mean loss over the batch and its gradient with respect to the predictions.
pub fn loss_and_gradient<T: Scalar>(
    kind: LossKind,
    predictions: &Tensor2<T>,
    targets: &Targets<T>,
) -> Result<(T, Tensor2<T>), LossError> {
    check(kind, predictions, targets)?;
    let mut grad = Tensor2::zeros(predictions.rows(), predictions.cols());
    let mut total = T::zero();
    match (kind, targets) {
        (LossKind::Mse, Targets::Regression(t)) => {
            let count = T::lit((predictions.rows() * predictions.cols()) as f64);
            let two = T::lit(2.0);
            for ((g, &p), &y) in grad
                .as_mut_slice()
                .iter_mut()
                .zip(predictions.as_slice())
                .zip(t.as_slice())
            {
                let diff = p - y;
                total += diff * diff;
                *g = two * diff / count;
            }
            Ok((total / count, grad))
        }
        (LossKind::CrossEntropy, Targets::Classes(classes)) => {
            let n = T::lit(predictions.rows() as f64);
            let floor = T::lit(PROBABILITY_FLOOR);
            for (r, &class) in classes.iter().enumerate() {
                let p = predictions.get(r, class);
                if p > floor {
                    total -= p.ln();
                    grad.set(r, class, -T::one() / (n * p));
                } else {
                    // Clamped region: constant loss, zero slope.
                    total -= floor.ln();
                }
            }
            Ok((total / n, grad))
        }
        _ => unreachable!("checked above"),
    }
}

/// ℓ1 penalty `weight · Σ|w|` over the penalized tensors.
pub fn l1_penalty<T: Scalar>(params: &[&Tensor2<T>], penalized: &[bool], weight: T) -> T {
    let mut total = T::zero();
    for (p, &on) in params.iter().zip(penalized) {
        if on {
            for &v in p.as_slice() {
                total += v.abs();
            }
        }
    }
    weight * total
}

/// Adds the ℓ1 subgradient (`weight · sign(w)`, zero at zero) to `grads`.
pub fn add_l1_subgradient<T: Scalar>(params: &[&Tensor2<T>], penalized: &[bool], weight: T, grads: &mut [Tensor2<T>]) {
    for ((p, &on), g) in params.iter().zip(penalized).zip(grads.iter_mut()) {
        if !on {
            continue;
        }
        for (gv, &w) in g.as_mut_slice().iter_mut().zip(p.as_slice()) {
            if w > T::zero() {
                *gv += weight;
            } else if w < T::zero() {
                *gv -= weight;
            }
        }
    }
}

/// Share of rows whose arg-max prediction differs from the class label.
pub fn error_rate<T: Scalar>(predictions: &Tensor2<T>, classes: &[usize]) -> f64 {
    if classes.is_empty() {
        return 0.0;
    }
    let wrong = predictions
        .argmax_rows()
        .iter()
        .zip(classes)
        .filter(|(p, y)| p != y)
        .count();
    wrong as f64 / classes.len() as f64
}
