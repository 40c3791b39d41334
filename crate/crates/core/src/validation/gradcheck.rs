use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::brute::{naive_dense_forward, naive_recurrent_forward};
use super::relative_error;
use crate::data::SequenceBatch;
use crate::engine::{self, OutputSelector};
use crate::models::{
    assign_parameters, build_mlp, flatten_parameters, Activation, ModelSpec, Network, RecurrentNetwork, SequenceMode,
    TrainedModel,
};
use crate::tensor::Tensor2;
use crate::training::loss::{LossKind, Targets};

const FD_STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;
const MAX_DEPTH: usize = 3;
const MAX_WIDTH: usize = 16;
const BATCH_ROWS: usize = 3;
const MAX_REDRAWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub input_error: f64,
    pub parameter_error: f64,
    /// Input batches redrawn because a ReLU pre-activation sat near zero.
    pub redraws: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub seed: u64,
    pub trials: usize,
    pub passed: usize,
    pub tolerance: f64,
    pub max_input_error: f64,
    pub max_parameter_error: f64,
    /// Trials where no kink-free batch was found; they are not counted as run.
    pub skipped: usize,
    pub outcomes: Vec<TrialOutcome>,
}

impl GradCheckSummary {
    pub fn all_passed(&self) -> bool {
        self.passed + self.skipped == self.trials && self.passed > 0
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}/{} trials under {:.0e} relative error (max input {:.2e}, max parameter {:.2e}, skipped {})",
            self.passed,
            self.trials - self.skipped,
            self.tolerance,
            self.max_input_error,
            self.max_parameter_error,
            self.skipped
        )
    }
}

/// Smallest |pre-activation| feeding any ReLU, over all rows.
fn relu_margin(network: &Network<f64>, batch: &Tensor2<f64>) -> f64 {
    let mut margin = f64::INFINITY;
    for r in 0..batch.rows() {
        let mut a = batch.row(r).to_vec();
        for layer in network.layers() {
            let mut z: Vec<f64> = (0..layer.output_width())
                .map(|i| layer.bias.get(0, i) + (0..a.len()).map(|j| layer.weight.get(i, j) * a[j]).sum::<f64>())
                .collect();
            if layer.activation == Activation::Relu {
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if layer.activation == Activation::Tanh {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
    }
    margin
}

fn mse(network: &Network<f64>, batch: &Tensor2<f64>, targets: &Tensor2<f64>) -> f64 {
    let mut total = 0.0;
    for r in 0..batch.rows() {
        let out = naive_dense_forward(network, batch.row(r));
        for (o, t) in out.iter().zip(targets.row(r)) {
            total += (o - t) * (o - t);
        }
    }
    total / (batch.rows() * targets.cols()) as f64
}

fn empty_summary(seed: u64, trials: usize) -> GradCheckSummary {
    GradCheckSummary {
        seed,
        trials,
        passed: 0,
        tolerance: TOLERANCE,
        max_input_error: 0.0,
        max_parameter_error: 0.0,
        skipped: 0,
        outcomes: Vec::with_capacity(trials),
    }
}

impl GradCheckSummary {
    fn record(&mut self, outcome: TrialOutcome) {
        self.passed += usize::from(outcome.passed);
        self.max_input_error = self.max_input_error.max(outcome.input_error);
        self.max_parameter_error = self.max_parameter_error.max(outcome.parameter_error);
        self.outcomes.push(outcome);
    }
}

fn uniform_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2<f64> {
    Tensor2::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .expect("sized")
}

/// Input and parameter relative errors of one dense network at a kink-free
/// random batch, plus the number of redraws; `None` when every draw sat
/// near a ReLU kink.
fn check_dense(net: &Network<f64>, rng: &mut ChaCha8Rng) -> Option<(f64, f64, usize)> {
    let p = net.input_width();
    let outputs = net.output_width();
    let mut redraws = 0;
    let batch = loop {
        let b = uniform_batch(rng, BATCH_ROWS, p);
        if relu_margin(net, &b) >= KINK_MARGIN {
            break b;
        }
        redraws += 1;
        if redraws == MAX_REDRAWS {
            return None;
        }
    };
    let k = rng.random_range(0..outputs);
    let jac = engine::input_jacobian_batch(net, &batch, OutputSelector::Output(k)).expect("consistent shapes");
    let mut fd_jac = Vec::with_capacity(BATCH_ROWS * p);
    for r in 0..BATCH_ROWS {
        let x = batch.row(r).to_vec();
        fd_jac.extend(engine::finite_difference_gradient(
            |v: &[f64]| naive_dense_forward(net, v)[k],
            &x,
            FD_STEP,
        ));
    }
    let input_error = relative_error(jac.entries.as_slice(), &fd_jac);

    let targets = Tensor2::new(
        BATCH_ROWS,
        outputs,
        (0..BATCH_ROWS * outputs).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("sized");
    let grads = engine::parameter_gradients(net, &batch, &Targets::Regression(targets.clone()), LossKind::Mse)
        .expect("consistent shapes");
    let analytic: Vec<f64> = grads.grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect();
    let numeric = engine::finite_difference_gradient(
        |theta: &[f64]| {
            let mut m = net.clone();
            assign_parameters(&mut m, theta);
            mse(&m, &batch, &targets)
        },
        &flatten_parameters(net),
        FD_STEP,
    );
    Some((input_error, relative_error(&analytic, &numeric), redraws))
}

/// Same comparison for a recurrent model: gradients of the final output with
/// respect to every input cell, and of the sequence MSE with respect to the
/// parameters. Hidden ReLU kinks are not screened.
fn check_recurrent(model: &RecurrentNetwork<f64>, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (tau, p) = (model.seq_len, model.input_width());
    let steps = model.seq_len - 1;
    let flat: Vec<f64> = (0..BATCH_ROWS * tau * p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let target_cols = match model.mode {
        SequenceMode::ManyToOne => 1,
        SequenceMode::ManyToMany => tau,
    };
    let targets = Tensor2::new(
        BATCH_ROWS,
        target_cols,
        (0..BATCH_ROWS * target_cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .expect("sized");
    let batch = SequenceBatch::new(BATCH_ROWS, tau, p, flat.clone(), Some(targets.clone())).expect("sized");
    let as_steps = |cells: &[f64]| -> Vec<Vec<f64>> { cells.chunks(p).map(<[f64]>::to_vec).collect() };

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for s in 0..BATCH_ROWS {
        let seq = batch.sequence(s);
        let g = engine::rnn_input_gradients(model, &seq, steps, OutputSelector::Output(0)).expect("consistent shapes");
        // Row k of `g` is lag k; reorder to step order to match the cells.
        for step in 0..tau {
            analytic.extend_from_slice(g.row(steps - step));
        }
        let cells = &flat[s * tau * p..(s + 1) * tau * p];
        numeric.extend(engine::finite_difference_gradient(
            |v: &[f64]| naive_recurrent_forward(model, &as_steps(v))[steps][0],
            cells,
            FD_STEP,
        ));
    }
    let input_error = relative_error(&analytic, &numeric);

    let grads = engine::rnn_parameter_gradients(model, &batch).expect("consistent shapes");
    let analytic: Vec<f64> = grads.grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect();
    let sequence_mse = |m: &RecurrentNetwork<f64>| -> f64 {
        let mut total = 0.0;
        for s in 0..BATCH_ROWS {
            let out = naive_recurrent_forward(m, &as_steps(&flat[s * tau * p..(s + 1) * tau * p]));
            for c in 0..target_cols {
                let step = if target_cols == 1 { steps } else { c };
                let d = out[step][0] - targets.get(s, c);
                total += d * d;
            }
        }
        total / (BATCH_ROWS * target_cols) as f64
    };
    let numeric = engine::finite_difference_gradient(
        |theta: &[f64]| {
            let mut m = model.clone();
            assign_parameters(&mut m, theta);
            sequence_mse(&m)
        },
        &flatten_parameters(model),
        FD_STEP,
    );
    (input_error, relative_error(&analytic, &numeric))
}

/// Checks input and parameter gradients of random dense networks against
/// central finite differences of a scalar reference evaluator.
pub fn gradient_check_trials(seed: u64, trials: usize) -> GradCheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = empty_summary(seed, trials);
    let acts = [Activation::Tanh, Activation::Relu, Activation::Linear];
    for trial in 0..trials {
        let depth = rng.random_range(1..=MAX_DEPTH);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=MAX_WIDTH)).collect();
        let activations: Vec<Activation> = (0..depth).map(|_| acts[rng.random_range(0..3)]).collect();
        let mut net: Network<f64> =
            build_mlp(&ModelSpec::mlp(&widths, &activations, rng.random())).expect("valid random spec");
        for layer in net.layers_mut() {
            for b in layer.bias.as_mut_slice() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let Some((input_error, parameter_error, redraws)) = check_dense(&net, &mut rng) else {
            summary.skipped += 1;
            continue;
        };
        summary.record(TrialOutcome {
            trial,
            widths,
            activations,
            input_error,
            parameter_error,
            redraws,
            passed: input_error < TOLERANCE && parameter_error < TOLERANCE,
        });
    }
    summary
}

/// Runs the same comparison on a given model at `points` random batches
/// with inputs in U(-2, 2), the standardized input range.
pub fn model_gradient_check(model: &TrainedModel, seed: u64, points: usize) -> GradCheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = empty_summary(seed, points);
    let (widths, activations) = match model {
        TrainedModel::Mlp(net) => {
            let mut widths = vec![net.input_width()];
            widths.extend(net.layers().iter().map(|l| l.output_width()));
            (widths, net.layers().iter().map(|l| l.activation).collect())
        }
        TrainedModel::Rnn(r) => {
            let mut widths = vec![r.input_width(), r.hidden_width()];
            widths.extend(r.head.layers().iter().map(|l| l.output_width()));
            let mut acts = vec![r.hidden_activation];
            acts.extend(r.head.layers().iter().map(|l| l.activation));
            (widths, acts)
        }
    };
    for trial in 0..points {
        let result = match model {
            TrainedModel::Mlp(net) => check_dense(net, &mut rng),
            TrainedModel::Rnn(r) => {
                let (i, p) = check_recurrent(r, &mut rng);
                Some((i, p, 0))
            }
        };
        let Some((input_error, parameter_error, redraws)) = result else {
            summary.skipped += 1;
            continue;
        };
        summary.record(TrialOutcome {
            trial,
            widths: widths.clone(),
            activations: activations.clone(),
            input_error,
            parameter_error,
            redraws,
            passed: input_error < TOLERANCE && parameter_error < TOLERANCE,
        });
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_run_passes() {
        let s = gradient_check_trials(7, 10);
        assert!(s.all_passed(), "{}", s.summary_line());
        assert_eq!(s, gradient_check_trials(7, 10));
    }

    #[test]
    fn trained_model_shapes_pass() {
        let net: Network<f64> =
            build_mlp(&ModelSpec::mlp(&[4, 6, 2], &[Activation::Tanh, Activation::Softmax], 3)).unwrap();
        let s = model_gradient_check(&TrainedModel::Mlp(net), 1, 4);
        assert!(s.all_passed(), "{}", s.summary_line());
        for mode in [SequenceMode::ManyToOne, SequenceMode::ManyToMany] {
            let rnn: RecurrentNetwork<f64> = crate::models::build_rnn(&ModelSpec::rnn(2, 4, 3, mode, 5)).unwrap();
            let s = model_gradient_check(&TrainedModel::Rnn(rnn), 2, 3);
            assert!(s.all_passed(), "{mode:?}: {}", s.summary_line());
        }
    }

    #[test]
    fn margin_sees_relu_inputs() {
        let layer = crate::models::Layer::new(Tensor2::row_vector(&[1.0]), vec![0.0], Activation::Relu).unwrap();
        let net = Network::new(vec![layer]).unwrap();
        assert_eq!(relu_margin(&net, &Tensor2::row_vector(&[0.0005])), 0.0005);
    }
}
