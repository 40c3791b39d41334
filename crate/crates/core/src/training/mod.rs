//! Mini-batch Adam training with inverse-time learning-rate decay, an optional
//! ℓ1 weight penalty and early stopping on a validation set.

pub mod adam;
pub mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{error_rate, loss, loss_and_gradient, LossKind, Targets};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, SequenceBatch, Split};
use crate::engine::{self, EngineError, ParameterGradients};
use crate::models::{Network, Parameterized, RecurrentNetwork};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became non-finite at epoch {epoch} (learning rate {learning_rate}); try a smaller learning rate")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("no training rows")]
    NoTrainingRows,
    #[error("{loss:?} loss does not match the dataset targets")]
    TargetMismatch { loss: LossKind },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// How the `decay` setting is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// `lr / (1 + decay · epoch)`, epoch counted from 0.
    InverseTimeEpoch,
    /// `lr / (1 + decay · update)`, counting every mini-batch update.
    InverseTimeStep,
    /// Constant rate; `decay` is an L2 weight-decay coefficient inside Adam.
    WeightDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub decay: f64,
    pub decay_mode: DecayMode,
    pub l1_weight: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    /// Share of training rows held out for early stopping when the dataset
    /// has no validation rows of its own.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Mse,
            learning_rate: 1e-3,
            decay: 0.0,
            decay_mode: DecayMode::InverseTimeEpoch,
            l1_weight: 0.0,
            max_epochs: 100,
            batch_size: 128,
            patience: 10,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must lie in [0, 1)");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return fail("batch_size and max_epochs must be at least 1");
        }
        if self.decay < 0.0 || self.l1_weight < 0.0 {
            return fail("decay and l1_weight must be non-negative");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            decay: match self.decay_mode {
                DecayMode::WeightDecay => 0.0,
                _ => self.decay,
            },
            weight_decay: match self.decay_mode {
                DecayMode::WeightDecay => self.decay,
                _ => 0.0,
            },
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch data loss over the epoch plus the ℓ1 penalty at its end.
    pub train_loss: f64,
    /// Data loss on the validation rows (no penalty).
    pub validation_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ErrorRate,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch that ran (1-based).
    pub stopped_epoch: usize,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
    pub metric: Metric,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
}

impl TrainReport {
    /// One JSON object per epoch, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("plain struct"));
            out.push('\n');
        }
        out
    }
}

struct FitOutcome<M> {
    model: M,
    epochs: Vec<EpochRecord>,
    stopped_epoch: usize,
    best_epoch: usize,
}

type ValidationLoss<'a, T, M> = &'a dyn Fn(&M) -> Result<T, EngineError>;

fn fit<T, M>(
    initial: &M,
    n_train: usize,
    config: &TrainConfig,
    mut batch_grads: impl FnMut(&M, &[usize]) -> Result<ParameterGradients<T>, EngineError>,
    validation_loss: Option<ValidationLoss<'_, T, M>>,
) -> Result<FitOutcome<M>, TrainError>
where
    T: Scalar,
    M: Parameterized<T> + Clone,
{
    config.validate()?;
    if n_train == 0 {
        return Err(TrainError::NoTrainingRows);
    }
    let adam = config.adam();
    let l1 = T::lit(config.l1_weight);
    let mut model = initial.clone();
    let penalized = model.penalized();
    let mut state = AdamState::for_params(&model.parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, M, usize)> = None;
    let mut waited = 0;
    let mut updates = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let decay_step = |updates: usize| match config.decay_mode {
            DecayMode::InverseTimeEpoch => epoch - 1,
            DecayMode::InverseTimeStep => updates,
            DecayMode::WeightDecay => 0,
        };
        let rate = adam.effective_rate(decay_step(updates));
        let mut data_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let diverged = TrainError::Diverged {
                epoch,
                learning_rate: adam.effective_rate(decay_step(updates)),
            };
            let mut g = match batch_grads(&model, chunk) {
                Ok(g) => g,
                Err(EngineError::NonFinite(_)) => return Err(diverged),
                Err(e) => return Err(e.into()),
            };
            if !g.loss.is_finite() {
                return Err(diverged);
            }
            data_loss += g.loss.as_f64() * chunk.len() as f64;
            if config.l1_weight > 0.0 {
                loss::add_l1_subgradient(&model.parameters(), &penalized, l1, &mut g.grads);
            }
            let step = decay_step(updates);
            adam_step(&mut model.parameters_mut(), &g.grads, &mut state, step, &adam);
            updates += 1;
        }
        let penalty = loss::l1_penalty(&model.parameters(), &penalized, l1).as_f64();
        let train_loss = data_loss / n_train as f64 + penalty;
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                learning_rate: rate,
            });
        }
        let val = match validation_loss {
            Some(f) => {
                let v = match f(&model) {
                    Ok(v) => v.as_f64(),
                    Err(EngineError::NonFinite(_)) => f64::NAN,
                    Err(e) => return Err(e.into()),
                };
                if !v.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch,
                        learning_rate: rate,
                    });
                }
                Some(v)
            }
            None => None,
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss: val,
            learning_rate: rate,
        });
        if let Some(v) = val {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, model.clone(), epoch));
                waited = 0;
            } else {
                waited += 1;
                if waited >= config.patience {
                    break;
                }
            }
        }
    }
    let stopped_epoch = epochs.len();
    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (model, stopped_epoch),
    };
    Ok(FitOutcome {
        model,
        epochs,
        stopped_epoch,
        best_epoch,
    })
}

/// Row indices for training and early stopping.
///
/// Validation rows come from the dataset when it has any; otherwise a seeded
/// `validation_fraction` of the training rows is carved out.
pub fn training_rows(dataset: &Dataset, config: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut train = dataset.rows_in(Split::Train);
    let validation = dataset.rows_in(Split::Validation);
    if !validation.is_empty() || config.validation_fraction == 0.0 {
        return (train, validation);
    }
    let held = (config.validation_fraction * train.len() as f64).round() as usize;
    if held == 0 || held >= train.len() {
        return (train, Vec::new());
    }
    train.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5A17));
    let validation = train.split_off(train.len() - held);
    train.sort_unstable();
    let mut validation = validation;
    validation.sort_unstable();
    (train, validation)
}

fn metric_of<T: Scalar>(network: &Network<T>, x: &Tensor2<T>, targets: &Targets<T>) -> Result<f64, TrainError> {
    let preds = engine::forward(network, x)?;
    Ok(match targets {
        Targets::Classes(c) => error_rate(&preds, c),
        Targets::Regression(_) => loss(LossKind::Mse, &preds, targets)
            .map_err(EngineError::from)?
            .as_f64(),
    })
}

/// Trains a dense network on the dataset's training rows.
///
/// Returns the weights with the lowest validation loss (or the final ones
/// when there is no validation set) and the per-epoch history.
pub fn train<T: Scalar>(
    network: &Network<T>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(Network<T>, TrainReport), TrainError> {
    if dataset.targets.natural_loss() != config.loss {
        return Err(TrainError::TargetMismatch { loss: config.loss });
    }
    let (train_rows, val_rows) = training_rows(dataset, config);
    let x_all: Tensor2<T> = dataset.features.cast();
    let y_all: Targets<T> = dataset.targets.cast();
    let x_train = x_all.select_rows(&train_rows);
    let y_train = y_all.select(&train_rows);
    let x_val = x_all.select_rows(&val_rows);
    let y_val = y_all.select(&val_rows);
    let loss_kind = config.loss;
    let val_fn = |net: &Network<T>| -> Result<T, EngineError> {
        let preds = engine::forward(net, &x_val)?;
        Ok(loss(loss_kind, &preds, &y_val)?)
    };
    let outcome = fit(
        network,
        train_rows.len(),
        config,
        |net, rows| engine::parameter_gradients(net, &x_train.select_rows(rows), &y_train.select(rows), loss_kind),
        if val_rows.is_empty() {
            None
        } else {
            Some(&val_fn as &dyn Fn(&Network<T>) -> Result<T, EngineError>)
        },
    )?;
    let test_rows = dataset.rows_in(Split::Test);
    let metric = match y_all {
        Targets::Classes(_) => Metric::ErrorRate,
        Targets::Regression(_) => Metric::Mse,
    };
    let train_metric = metric_of(&outcome.model, &x_train, &y_train)?;
    let test_metric = if test_rows.is_empty() {
        None
    } else {
        Some(metric_of(
            &outcome.model,
            &x_all.select_rows(&test_rows),
            &y_all.select(&test_rows),
        )?)
    };
    let report = TrainReport {
        epochs: outcome.epochs,
        stopped_epoch: outcome.stopped_epoch,
        best_epoch: outcome.best_epoch,
        metric,
        train_metric,
        test_metric,
    };
    Ok((outcome.model, report))
}

/// Trains a recurrent network with mean-squared error on windowed sequences.
///
/// `test` only feeds the reported test metric.
pub fn train_sequences<T: Scalar>(
    model: &RecurrentNetwork<T>,
    train_batch: &SequenceBatch<T>,
    validation: Option<&SequenceBatch<T>>,
    test: Option<&SequenceBatch<T>>,
    config: &TrainConfig,
) -> Result<(RecurrentNetwork<T>, TrainReport), TrainError> {
    if config.loss != LossKind::Mse {
        return Err(TrainError::TargetMismatch { loss: config.loss });
    }
    let val_fn = |net: &RecurrentNetwork<T>| -> Result<T, EngineError> {
        engine::rnn_parameter_gradients(net, validation.expect("validation batch")).map(|g| g.loss)
    };
    let outcome = fit(
        model,
        train_batch.n_sequences(),
        config,
        |net, rows| engine::rnn_parameter_gradients(net, &train_batch.select(rows)),
        validation.map(|_| &val_fn as &dyn Fn(&RecurrentNetwork<T>) -> Result<T, EngineError>),
    )?;
    let train_metric = engine::rnn_parameter_gradients(&outcome.model, train_batch)?
        .loss
        .as_f64();
    let test_metric = match test {
        Some(b) => Some(engine::rnn_parameter_gradients(&outcome.model, b)?.loss.as_f64()),
        None => None,
    };
    Ok((
        outcome.model,
        TrainReport {
            epochs: outcome.epochs,
            stopped_epoch: outcome.stopped_epoch,
            best_epoch: outcome.best_epoch,
            metric: Metric::Mse,
            train_metric,
            test_metric,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, ColumnKind, Preprocessing};
    use crate::models::{build_mlp, Activation, ModelSpec};
    use rand::Rng;

    fn dataset(features: Tensor2<f64>, targets: Targets<f64>) -> Dataset {
        let p = features.cols();
        let n = features.rows();
        Dataset {
            features,
            targets,
            target_name: "y".into(),
            columns: (0..p)
                .map(|j| Column {
                    name: format!("x{j}"),
                    kind: ColumnKind::Numeric,
                    group: j,
                })
                .collect(),
            groups: (0..p).map(|j| format!("x{j}")).collect(),
            split: vec![Split::Train; n],
            preprocessing: Preprocessing::default(),
        }
    }

    #[test]
    fn recovers_slope_of_noiseless_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let ds = dataset(
            Tensor2::new(1000, 1, xs).unwrap(),
            Targets::Regression(Tensor2::new(1000, 1, ys).unwrap()),
        );
        let net = Network::linear(Tensor2::row_vector(&[0.0]));
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            max_epochs: 60,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let (fitted, report) = train(&net, &ds, &cfg).unwrap();
        let w: f64 = fitted.layers()[0].weight.get(0, 0);
        assert!((w - 2.0).abs() < 1e-2, "learned {w}");
        assert_eq!(report.stopped_epoch, 60);
    }

    fn separable() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..400 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            xs.extend([a, b]);
            ys.push(usize::from(a + 0.5 * b > 0.0));
        }
        dataset(Tensor2::new(400, 2, xs).unwrap(), Targets::Classes(ys))
    }

    #[test]
    fn separable_loss_decreases_monotonically() {
        let ds = separable();
        let net: Network<f64> = build_mlp(&ModelSpec::mlp(&[2, 2], &[Activation::Softmax], 3)).unwrap();
        let cfg = TrainConfig {
            loss: LossKind::CrossEntropy,
            learning_rate: 0.01,
            batch_size: 400,
            max_epochs: 40,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let (_, report) = train(&net, &ds, &cfg).unwrap();
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
        for w in losses[2..].windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
        assert_eq!(report.metric, Metric::ErrorRate);
    }

    #[test]
    fn early_stopping_restores_best_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 120;
        let xs: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Pure-noise targets: validation loss stops improving quickly.
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = dataset(
            Tensor2::new(n, 3, xs).unwrap(),
            Targets::Regression(Tensor2::new(n, 1, ys).unwrap()),
        );
        let net: Network<f64> =
            build_mlp(&ModelSpec::mlp(&[3, 32, 1], &[Activation::Tanh, Activation::Linear], 0)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            max_epochs: 300,
            patience: 4,
            validation_fraction: 0.25,
            ..TrainConfig::default()
        };
        let (fitted, report) = train(&net, &ds, &cfg).unwrap();
        assert!(report.stopped_epoch < 300);
        let vals: Vec<f64> = report.epochs.iter().map(|e| e.validation_loss.unwrap()).collect();
        let (best_idx, best) = vals
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        assert_eq!(report.best_epoch, best_idx + 1);
        // Patience ran out exactly at the last epoch.
        assert_eq!(report.stopped_epoch, report.best_epoch + cfg.patience);
        let (_, val_rows) = training_rows(&ds, &cfg);
        let preds = engine::forward(&fitted, &ds.features.select_rows(&val_rows)).unwrap();
        let restored = loss(LossKind::Mse, &preds, &ds.targets.select(&val_rows)).unwrap();
        assert_eq!(restored, best);
    }

    #[test]
    fn strong_l1_silences_dead_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 500;
        let xs: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n).map(|r| 3.0 * xs[2 * r]).collect();
        let ds = dataset(
            Tensor2::new(n, 2, xs).unwrap(),
            Targets::Regression(Tensor2::new(n, 1, ys).unwrap()),
        );
        let net: Network<f64> =
            build_mlp(&ModelSpec::mlp(&[2, 8, 1], &[Activation::Tanh, Activation::Linear], 1)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            decay: 0.5,
            l1_weight: 1.0,
            batch_size: 50,
            max_epochs: 150,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let (fitted, _) = train(&net, &ds, &cfg).unwrap();
        let dead = fitted.layers()[0].weight.column(1);
        let small = dead.iter().filter(|w| w.abs() < 1e-3).count();
        assert!(small * 2 > dead.len(), "{dead:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let ds = dataset(
            Tensor2::new(4, 1, vec![1e200, -1e200, 1e200, 3.0]).unwrap(),
            Targets::Regression(Tensor2::new(4, 1, vec![1e300, 0.0, 1.0, 2.0]).unwrap()),
        );
        let net = Network::linear(Tensor2::row_vector(&[1e200]));
        let cfg = TrainConfig {
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&net, &ds, &cfg),
            Err(TrainError::Diverged { epoch: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn json_lines_one_per_epoch() {
        let ds = separable();
        let net: Network<f64> = build_mlp(&ModelSpec::mlp(&[2, 2], &[Activation::Softmax], 3)).unwrap();
        let cfg = TrainConfig {
            loss: LossKind::CrossEntropy,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let (_, report) = train(&net, &ds, &cfg).unwrap();
        let text = report.to_json_lines();
        assert_eq!(text.lines().count(), report.epochs.len());
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v["train_loss"].is_number());
        }
    }
}
