//! Every metric recomputed with plain loops: a scalar forward evaluator and
//! central finite differences on individual input cells. Shares no code with
//! the tape or the explain module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{relative_error, ValidationError};
use crate::data::SequenceBatch;
use crate::engine::OutputSelector;
use crate::explain::{self, ImportanceEntry, ImportanceReport, Metric, Scope};
use crate::models::{
    build_mlp, build_rnn, Activation, Architecture, ModelSpec, Network, RecurrentNetwork, SequenceMode,
};
use crate::tensor::Tensor2;

const FD_STEP: f64 = 1e-5;
const MAX_FEATURES: usize = 5;
const MAX_STEPS: usize = 3;
const MAX_SAMPLES: usize = 100;

fn act(a: Activation, z: &mut [f64]) {
    match a {
        Activation::Linear => {}
        Activation::Relu => z.iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 }),
        Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Softmax => {
            let mut m = f64::NEG_INFINITY;
            for v in z.iter() {
                if *v > m {
                    m = *v;
                }
            }
            let mut total = 0.0;
            for v in z.iter_mut() {
                *v = (*v - m).exp();
                total += *v;
            }
            for v in z.iter_mut() {
                *v /= total;
            }
        }
    }
}

/// One input vector through the dense layers, element by element.
pub fn naive_dense_forward(network: &Network<f64>, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for layer in network.layers() {
        let mut z = vec![0.0; layer.output_width()];
        for (i, zi) in z.iter_mut().enumerate() {
            let mut s = layer.bias.get(0, i);
            for (j, aj) in a.iter().enumerate() {
                s += layer.weight.get(i, j) * aj;
            }
            *zi = s;
        }
        act(layer.activation, &mut z);
        a = z;
    }
    a
}

/// Head outputs at every step of one sequence (`steps[s]` is the input at step s).
pub fn naive_recurrent_forward(model: &RecurrentNetwork<f64>, steps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hidden = model.hidden_width();
    let mut h = vec![0.0; hidden];
    let mut outputs = Vec::with_capacity(steps.len());
    for x in steps {
        let mut z = vec![0.0; hidden];
        for (i, zi) in z.iter_mut().enumerate() {
            let mut s = model.hidden_bias.get(0, i);
            for (j, xj) in x.iter().enumerate() {
                s += model.input_weight.get(i, j) * xj;
            }
            for (k, hk) in h.iter().enumerate() {
                s += model.recurrent_weight.get(i, k) * hk;
            }
            *zi = s;
        }
        act(model.hidden_activation, &mut z);
        h = z;
        outputs.push(naive_dense_forward(&model.head, &h));
    }
    outputs
}

fn pick(out: &[f64], selector: OutputSelector) -> usize {
    match selector {
        OutputSelector::Output(k) => k,
        OutputSelector::PredictedClass => {
            let mut best = 0;
            for (i, v) in out.iter().enumerate() {
                if *v > out[best] {
                    best = i;
                }
            }
            best
        }
    }
}

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Iid,
    Local { sample: usize },
    ManyToOne,
    ManyToMany,
    Lag,
    LagLocal { sequence: usize },
}

#[derive(Debug, Clone, Copy)]
pub enum OracleSubject<'a> {
    Dense {
        network: &'a Network<f64>,
        batch: &'a Tensor2<f64>,
    },
    Recurrent {
        model: &'a RecurrentNetwork<f64>,
        batch: &'a SequenceBatch<f64>,
    },
}

fn report(
    scope: Scope,
    metric: Metric,
    names: Vec<String>,
    raw: Vec<f64>,
    count: usize,
) -> Result<ImportanceReport, ValidationError> {
    let mut total = 0.0;
    for r in &raw {
        total += r;
    }
    if total <= 0.0 {
        return Err(explain::ExplainError::Insensitive { normalizer: total }.into());
    }
    let mut entries: Vec<ImportanceEntry> = names
        .into_iter()
        .zip(&raw)
        .enumerate()
        .map(|(id, (name, &r))| ImportanceEntry {
            id,
            name,
            value: r * 100.0 / total,
            raw: r,
        })
        .collect();
    entries.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.id.cmp(&b.id)));
    Ok(ImportanceReport {
        scope,
        metric,
        entries,
        normalizer: total,
        selector: None,
        sample_count: count,
        grouped: false,
    })
}

fn rms(values: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in values {
        s += v * v;
    }
    (s / values.len() as f64).sqrt()
}

/// Derivative of the selected output at `out_step` of sequence `seq` with
/// respect to input `(in_step, j)`.
fn seq_derivative(
    model: &RecurrentNetwork<f64>,
    seq: &[Vec<f64>],
    selector: OutputSelector,
    out_step: usize,
    in_step: usize,
    j: usize,
) -> f64 {
    let k = pick(&naive_recurrent_forward(model, seq)[out_step], selector);
    central(
        |v| {
            let mut s = seq.to_vec();
            s[in_step][j] = v;
            naive_recurrent_forward(model, &s)[out_step][k]
        },
        seq[in_step][j],
    )
}

fn sequences(batch: &SequenceBatch<f64>) -> Vec<Vec<Vec<f64>>> {
    (0..batch.n_sequences())
        .map(|t| {
            (0..batch.seq_len())
                .map(|s| (0..batch.n_features()).map(|j| batch.get(t, s, j)).collect())
                .collect()
        })
        .collect()
}

/// Recomputes one metric by finite differences on single input cells.
///
/// Limited to small instances: at most 5 features, 3 steps and 100 samples.
pub fn brute_force_metric_oracle(
    subject: OracleSubject<'_>,
    metric: MetricKind,
    selector: OutputSelector,
) -> Result<ImportanceReport, ValidationError> {
    let names = |p: usize| (1..=p).map(|j| format!("X{j}")).collect::<Vec<_>>();
    let report = match subject {
        OracleSubject::Dense { network, batch } => {
            let (n, p) = batch.shape();
            if p > MAX_FEATURES || n > MAX_SAMPLES || n == 0 {
                return Err(ValidationError::TooLarge(format!("{n} samples x {p} features")));
            }
            let deriv = |i: usize, j: usize| {
                let x = batch.row(i).to_vec();
                let k = pick(&naive_dense_forward(network, &x), selector);
                central(
                    |v| {
                        let mut y = x.clone();
                        y[j] = v;
                        naive_dense_forward(network, &y)[k]
                    },
                    x[j],
                )
            };
            match metric {
                MetricKind::Iid => {
                    let raw = (0..p)
                        .map(|j| rms(&(0..n).map(|i| deriv(i, j)).collect::<Vec<_>>()))
                        .collect();
                    report(Scope::Global, Metric::Iid, names(p), raw, n)?
                }
                MetricKind::Local { sample } => {
                    if sample >= n {
                        return Err(ValidationError::Mismatch(format!("sample {sample} out of range")));
                    }
                    let raw = (0..p).map(|j| deriv(sample, j).powi(2)).collect();
                    report(Scope::Local { sample: Some(sample) }, Metric::Local, names(p), raw, 1)?
                }
                other => return Err(ValidationError::Mismatch(format!("{other:?} needs a recurrent model"))),
            }
        }
        OracleSubject::Recurrent { model, batch } => {
            let (n, tau, p) = (batch.n_sequences(), batch.seq_len(), batch.n_features());
            if p > MAX_FEATURES || tau > MAX_STEPS || n > MAX_SAMPLES || n == 0 {
                return Err(ValidationError::TooLarge(format!("{n} sequences of {tau}x{p}")));
            }
            let seqs = sequences(batch);
            let last = tau - 1;
            let lag_raw = |which: &[usize]| -> Vec<f64> {
                (0..tau)
                    .map(|k| {
                        let mut total = 0.0;
                        for j in 0..p {
                            let d: Vec<f64> = which
                                .iter()
                                .map(|&t| seq_derivative(model, &seqs[t], selector, last, last - k, j))
                                .collect();
                            total += rms(&d);
                        }
                        total
                    })
                    .collect()
            };
            let lag_names = (0..tau).map(|k| format!("lag {k}")).collect();
            match metric {
                MetricKind::ManyToOne => {
                    let raw = (0..p)
                        .map(|j| {
                            let d: Vec<f64> = (0..n)
                                .map(|t| seq_derivative(model, &seqs[t], selector, last, last, j))
                                .collect();
                            rms(&d)
                        })
                        .collect();
                    report(Scope::Global, Metric::ManyToOne, names(p), raw, n)?
                }
                MetricKind::ManyToMany => {
                    let raw = (0..p)
                        .map(|j| {
                            let mut total = 0.0;
                            for l in 0..tau {
                                let d: Vec<f64> = (0..n)
                                    .map(|t| seq_derivative(model, &seqs[t], selector, l, l, j))
                                    .collect();
                                total += rms(&d);
                            }
                            total / tau as f64
                        })
                        .collect();
                    report(Scope::Global, Metric::ManyToMany, names(p), raw, n)?
                }
                MetricKind::Lag => {
                    let all: Vec<usize> = (0..n).collect();
                    report(Scope::LagGlobal, Metric::Lag, lag_names, lag_raw(&all), n)?
                }
                MetricKind::LagLocal { sequence } => {
                    if sequence >= n {
                        return Err(ValidationError::Mismatch(format!("sequence {sequence} out of range")));
                    }
                    report(
                        Scope::LagLocal {
                            sequence: Some(sequence),
                        },
                        Metric::Lag,
                        lag_names,
                        lag_raw(&[sequence]),
                        1,
                    )?
                }
                other => return Err(ValidationError::Mismatch(format!("{other:?} needs a dense model"))),
            }
        }
    };
    Ok(report.with_selector(selector))
}

/// Worst disagreement per metric over a set of random small instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub instances: usize,
    pub max_error_iid: f64,
    pub max_error_local: f64,
    pub max_error_many_to_one: f64,
    pub max_error_many_to_many: f64,
    pub max_error_lag: f64,
    /// Instances whose model was insensitive (skipped for that metric).
    pub insensitive: usize,
}

impl AgreementSummary {
    pub fn worst(&self) -> f64 {
        [
            self.max_error_iid,
            self.max_error_local,
            self.max_error_many_to_one,
            self.max_error_many_to_many,
            self.max_error_lag,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn by_id(r: &ImportanceReport) -> Vec<f64> {
    r.values_by_id()
}

fn compare(
    fast: Result<ImportanceReport, explain::ExplainError>,
    slow: Result<ImportanceReport, ValidationError>,
    worst: &mut f64,
    insensitive: &mut usize,
) -> Result<(), ValidationError> {
    match (fast, slow) {
        (Ok(a), Ok(b)) => {
            *worst = worst.max(relative_error(&by_id(&a), &by_id(&b)));
            Ok(())
        }
        (Err(explain::ExplainError::Insensitive { .. }), _)
        | (_, Err(ValidationError::Explain(explain::ExplainError::Insensitive { .. }))) => {
            *insensitive += 1;
            Ok(())
        }
        (Err(e), _) => Err(e.into()),
        (_, Err(e)) => Err(e),
    }
}

fn pick_activation(rng: &mut ChaCha8Rng) -> Activation {
    [Activation::Tanh, Activation::Relu, Activation::Linear][rng.random_range(0..3)]
}

/// Compares all five metrics against the brute-force oracle on `instances`
/// random networks with at most 5 inputs, 4 hidden units, 3 steps and 100 samples.
pub fn oracle_agreement_trials(seed: u64, instances: usize) -> Result<AgreementSummary, ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = AgreementSummary {
        instances,
        max_error_iid: 0.0,
        max_error_local: 0.0,
        max_error_many_to_one: 0.0,
        max_error_many_to_many: 0.0,
        max_error_lag: 0.0,
        insensitive: 0,
    };
    let sel = OutputSelector::Output(0);
    for _ in 0..instances {
        let p = rng.random_range(1..=MAX_FEATURES);
        let hidden = rng.random_range(1..=4);
        let n = rng.random_range(1..=MAX_SAMPLES);
        let tau = rng.random_range(1..=MAX_STEPS);
        let spec_seed: u64 = rng.random();
        // ReLU only appears in the recurrent head, biased away from its kink,
        // so no finite difference straddles one.
        let dense_act = [Activation::Tanh, Activation::Linear][rng.random_range(0..2)];
        let net: Network<f64> = build_mlp(&ModelSpec::mlp(
            &[p, hidden, 1],
            &[dense_act, Activation::Linear],
            spec_seed,
        ))
        .map_err(|e| ValidationError::Mismatch(e.to_string()))?;
        let batch = Tensor2::new(n, p, (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect()).expect("sized");
        let names: Vec<String> = (1..=p).map(|j| format!("X{j}")).collect();
        compare(
            explain::global_importance(&net, &batch, sel, &names),
            brute_force_metric_oracle(
                OracleSubject::Dense {
                    network: &net,
                    batch: &batch,
                },
                MetricKind::Iid,
                sel,
            ),
            &mut s.max_error_iid,
            &mut s.insensitive,
        )?;
        let sample = rng.random_range(0..n);
        compare(
            explain::local_importance(&net, batch.row(sample), sel, &names),
            brute_force_metric_oracle(
                OracleSubject::Dense {
                    network: &net,
                    batch: &batch,
                },
                MetricKind::Local { sample },
                sel,
            ),
            &mut s.max_error_local,
            &mut s.insensitive,
        )?;

        let spec = ModelSpec {
            architecture: Architecture::Rnn {
                input_width: p,
                hidden_width: hidden,
                hidden_activation: [Activation::Tanh, Activation::Linear][rng.random_range(0..2)],
                head_widths: vec![1],
                head_activations: vec![pick_activation(&mut rng)],
                seq_len: tau,
                mode: SequenceMode::ManyToOne,
            },
            seed: spec_seed,
        };
        let mut rnn: RecurrentNetwork<f64> = build_rnn(&spec).map_err(|e| ValidationError::Mismatch(e.to_string()))?;
        // A ReLU head has a single kink at 0; bias it away so every output is active.
        if rnn.head.output_activation() == Activation::Relu {
            let b = &mut rnn.head.layers_mut()[0].bias;
            b.set(0, 0, 10.0);
        }
        let seqs = SequenceBatch::new(
            n,
            tau,
            p,
            (0..n * tau * p).map(|_| rng.random_range(-1.5..1.5)).collect(),
            None,
        )
        .map_err(|e| ValidationError::Mismatch(e.to_string()))?;
        let subject = OracleSubject::Recurrent {
            model: &rnn,
            batch: &seqs,
        };
        compare(
            explain::global_importance_many_to_one(&rnn, &seqs, sel, &names),
            brute_force_metric_oracle(subject, MetricKind::ManyToOne, sel),
            &mut s.max_error_many_to_one,
            &mut s.insensitive,
        )?;
        compare(
            explain::lag_importance_global(&rnn, &seqs, sel),
            brute_force_metric_oracle(subject, MetricKind::Lag, sel),
            &mut s.max_error_lag,
            &mut s.insensitive,
        )?;
        let mm = rnn.with_mode(SequenceMode::ManyToMany);
        compare(
            explain::global_importance_many_to_many(&mm, &seqs, sel, &names),
            brute_force_metric_oracle(
                OracleSubject::Recurrent {
                    model: &mm,
                    batch: &seqs,
                },
                MetricKind::ManyToMany,
                sel,
            ),
            &mut s.max_error_many_to_many,
            &mut s.insensitive,
        )?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_oracle() {
        let net = Network::linear(Tensor2::row_vector(&[3.0, -1.0, 0.0]));
        let batch = Tensor2::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 2.0]]).unwrap();
        let r = brute_force_metric_oracle(
            OracleSubject::Dense {
                network: &net,
                batch: &batch,
            },
            MetricKind::Iid,
            OutputSelector::Output(0),
        )
        .unwrap();
        let v = r.values_by_id();
        assert!(relative_error(&v, &[75.0, 25.0, 0.0]) < 1e-8, "{v:?}");
    }

    #[test]
    fn geometric_decay_reproduced() {
        let m = RecurrentNetwork::new(
            Tensor2::row_vector(&[1.0]),
            Tensor2::row_vector(&[0.5]),
            vec![0.0],
            Activation::Linear,
            Network::linear(Tensor2::row_vector(&[1.0])),
            SequenceMode::ManyToOne,
            3,
        )
        .unwrap();
        let batch = SequenceBatch::new(2, 3, 1, vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0], None).unwrap();
        let r = brute_force_metric_oracle(
            OracleSubject::Recurrent {
                model: &m,
                batch: &batch,
            },
            MetricKind::Lag,
            OutputSelector::Output(0),
        )
        .unwrap();
        let expected = [100.0 / 1.75, 50.0 / 1.75, 25.0 / 1.75];
        assert!(relative_error(&r.values_by_id(), &expected) < 1e-8);
    }

    #[test]
    fn naive_softmax_sums_to_one() {
        let layer = crate::models::Layer::new(
            Tensor2::from_rows(&[[1.0, 2.0], [-1.0, 0.5], [0.0, 3.0]]).unwrap(),
            vec![0.1, 0.2, 0.3],
            Activation::Softmax,
        )
        .unwrap();
        let net = Network::new(vec![layer]).unwrap();
        let out = naive_dense_forward(&net, &[0.3, -0.7]);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let tape = crate::engine::forward(&net, &Tensor2::row_vector(&[0.3, -0.7])).unwrap();
        assert!(relative_error(&out, tape.as_slice()) < 1e-15);
    }

    #[test]
    fn rejects_large_instances() {
        let net = Network::linear(Tensor2::row_vector(&[1.0; 6]));
        let batch = Tensor2::zeros(1, 6);
        assert!(matches!(
            brute_force_metric_oracle(
                OracleSubject::Dense {
                    network: &net,
                    batch: &batch
                },
                MetricKind::Iid,
                OutputSelector::Output(0)
            ),
            Err(ValidationError::TooLarge(_))
        ));
    }

    #[test]
    fn agreement_on_a_few_instances() {
        let s = oracle_agreement_trials(1, 5).unwrap();
        assert!(s.worst() < 1e-4, "{s:?}");
    }
}
