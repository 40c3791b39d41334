//! Forward evaluation, input gradients and parameter gradients for dense and
//! recurrent networks, all driven by the matrix tape in [`tape`].

mod tape;

pub use tape::{activate, Gradients, NodeId, Tape};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SequenceBatch;
use crate::models::{Activation, Network, Parameterized, RecurrentNetwork, SequenceMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;
use crate::training::loss::{loss_and_gradient, LossError, LossKind, Targets};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{op}: expected {expected}, got {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("output selector index {index} out of range for {outputs} outputs")]
    SelectorOutOfRange { index: usize, outputs: usize },
    #[error("output step {step} out of range for sequence length {seq_len}")]
    StepOutOfRange { step: usize, seq_len: usize },
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("recurrent training needs per-sequence or per-step regression targets")]
    MissingTargets,
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Which scalar output is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSelector {
    /// A fixed output unit: the regression output, or a class probability
    /// when the network ends in softmax.
    Output(usize),
    /// The arg-max output of each sample.
    PredictedClass,
}

impl OutputSelector {
    /// Positive-class probability for a two-way softmax, output 0 otherwise.
    pub fn default_for<T: Scalar>(network: &Network<T>) -> Self {
        if network.output_activation() == Activation::Softmax && network.output_width() == 2 {
            OutputSelector::Output(1)
        } else {
            OutputSelector::Output(0)
        }
    }

    fn validate(self, outputs: usize) -> Result<(), EngineError> {
        match self {
            OutputSelector::Output(index) if index >= outputs => {
                Err(EngineError::SelectorOutOfRange { index, outputs })
            }
            _ => Ok(()),
        }
    }

    /// One-hot seed rows picking the selected output of each row.
    fn seed<T: Scalar>(self, outputs: &Tensor2<T>) -> Tensor2<T> {
        let mut seed = Tensor2::zeros(outputs.rows(), outputs.cols());
        match self {
            OutputSelector::Output(index) => {
                for r in 0..outputs.rows() {
                    seed.set(r, index, T::one());
                }
            }
            OutputSelector::PredictedClass => {
                for (r, c) in outputs.argmax_rows().into_iter().enumerate() {
                    seed.set(r, c, T::one());
                }
            }
        }
        seed
    }
}

impl fmt::Display for OutputSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputSelector::Output(i) => write!(f, "output:{i}"),
            OutputSelector::PredictedClass => f.write_str("predicted"),
        }
    }
}

impl FromStr for OutputSelector {
    type Err = String;

    /// Accepts `output:K`, a bare index `K`, `positive` (output 1) or `predicted`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "predicted" | "predicted_class" => return Ok(OutputSelector::PredictedClass),
            "positive" => return Ok(OutputSelector::Output(1)),
            _ => {}
        }
        let index = s.strip_prefix("output:").unwrap_or(s);
        index
            .parse()
            .map(OutputSelector::Output)
            .map_err(|_| format!("invalid output selector `{s}`"))
    }
}

/// `∂(selected output of sample i)/∂x_j` for every row of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct InputJacobian<T> {
    pub entries: Tensor2<T>,
}

impl<T: Scalar> InputJacobian<T> {
    pub fn n_samples(&self) -> usize {
        self.entries.rows()
    }

    pub fn n_features(&self) -> usize {
        self.entries.cols()
    }

    /// Divides column `j` by `scale[j]` (zero scale gives a zero column).
    ///
    /// Turns sensitivities to standardized inputs into sensitivities to raw
    /// inputs when `scale` holds the standard deviations used for scaling.
    pub fn rescale_columns(&self, scale: &[T]) -> Self {
        assert_eq!(scale.len(), self.n_features(), "one scale per feature");
        let mut entries = self.entries.clone();
        for r in 0..entries.rows() {
            for (v, &s) in entries.row_mut(r).iter_mut().zip(scale) {
                *v = if s == T::zero() { T::zero() } else { *v / s };
            }
        }
        Self { entries }
    }
}

/// Mean loss of a batch and its gradient for every parameter tensor, in
/// [`Parameterized::parameters`] order.
#[derive(Debug, Clone)]
pub struct ParameterGradients<T> {
    pub loss: T,
    pub grads: Vec<Tensor2<T>>,
}

fn shape_err(op: &'static str, expected: impl ToString, found: impl ToString) -> EngineError {
    EngineError::ShapeMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn check_finite<T: Scalar>(t: &Tensor2<T>, op: &'static str) -> Result<(), EngineError> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(EngineError::NonFinite(op))
    }
}

/// Puts every parameter tensor of `model` on the tape as a leaf.
pub fn parameter_leaves<T: Scalar, M: Parameterized<T>>(tape: &mut Tape<T>, model: &M, track: bool) -> Vec<NodeId> {
    model
        .parameters()
        .into_iter()
        .map(|p| tape.leaf(p.clone(), track))
        .collect()
}

/// Records `network` applied to `input`, using `leaves` as `[w0, b0, w1, b1, ..]`.
pub fn record_network<T: Scalar>(tape: &mut Tape<T>, network: &Network<T>, input: NodeId, leaves: &[NodeId]) -> NodeId {
    let mut x = input;
    for (layer, pair) in network.layers().iter().zip(leaves.chunks(2)) {
        let z = tape.linear(x, pair[0]);
        let z = tape.add_bias(z, pair[1]);
        x = tape.activate(z, layer.activation);
    }
    x
}

/// Nodes produced by recording a recurrent network over a batch.
#[derive(Debug, Clone)]
pub struct RecordedRecurrent {
    /// Input leaf per step (`n_sequences x p`).
    pub inputs: Vec<NodeId>,
    /// Head output node per requested step, in the order requested.
    pub outputs: Vec<NodeId>,
    pub params: Vec<NodeId>,
}

/// Unrolls the Elman recursion over `batch` (zero initial state) and applies
/// the output head at each step in `head_steps`.
pub fn record_recurrent<T: Scalar>(
    tape: &mut Tape<T>,
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    track_inputs: bool,
    track_params: bool,
    head_steps: &[usize],
) -> RecordedRecurrent {
    let params = parameter_leaves(tape, model, track_params);
    let (w_in, w_rec, bias) = (params[0], params[1], params[2]);
    let head_leaves = &params[3..];
    let last = head_steps.iter().copied().max().map_or(0, |s| s + 1);
    let mut inputs = Vec::with_capacity(last);
    let mut hidden: Vec<NodeId> = Vec::with_capacity(last);
    for s in 0..last {
        let x = tape.leaf(batch.step(s), track_inputs);
        inputs.push(x);
        let mut z = tape.linear(x, w_in);
        if let Some(&h_prev) = hidden.last() {
            let r = tape.linear(h_prev, w_rec);
            z = tape.add(z, r);
        }
        let z = tape.add_bias(z, bias);
        hidden.push(tape.activate(z, model.hidden_activation));
    }
    let outputs = head_steps
        .iter()
        .map(|&s| record_network(tape, &model.head, hidden[s], head_leaves))
        .collect();
    RecordedRecurrent {
        inputs,
        outputs,
        params,
    }
}

fn check_batch<T: Scalar>(network: &Network<T>, batch: &Tensor2<T>) -> Result<(), EngineError> {
    if batch.cols() != network.input_width() {
        return Err(shape_err(
            "forward",
            format!("{} input columns", network.input_width()),
            format!("a {}x{} batch", batch.rows(), batch.cols()),
        ));
    }
    Ok(())
}

fn check_sequences<T: Scalar>(model: &RecurrentNetwork<T>, batch: &SequenceBatch<T>) -> Result<(), EngineError> {
    if batch.n_features() != model.input_width() || batch.seq_len() != model.seq_len {
        return Err(shape_err(
            "recurrent forward",
            format!("sequences of {}x{}", model.seq_len, model.input_width()),
            format!("{}x{}", batch.seq_len(), batch.n_features()),
        ));
    }
    Ok(())
}

/// Evaluates the network on every row of `batch`.
pub fn forward<T: Scalar>(network: &Network<T>, batch: &Tensor2<T>) -> Result<Tensor2<T>, EngineError> {
    check_batch(network, batch)?;
    let mut x = batch.clone();
    for layer in network.layers() {
        let z = x.matmul_transb(&layer.weight).add_row(layer.bias.as_slice());
        x = activate(&z, layer.activation);
    }
    check_finite(&x, "forward")?;
    Ok(x)
}

/// Outputs of a recurrent model: one `n_sequences x outputs` matrix for
/// many-to-one, one per step for many-to-many.
pub fn rnn_forward<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
) -> Result<Vec<Tensor2<T>>, EngineError> {
    check_sequences(model, batch)?;
    let steps: Vec<usize> = match model.mode {
        SequenceMode::ManyToOne => vec![model.seq_len - 1],
        SequenceMode::ManyToMany => (0..model.seq_len).collect(),
    };
    let mut tape = Tape::new();
    let rec = record_recurrent(&mut tape, model, batch, false, false, &steps);
    let outputs: Vec<Tensor2<T>> = rec.outputs.iter().map(|&id| tape.value(id).clone()).collect();
    for o in &outputs {
        check_finite(o, "recurrent forward")?;
    }
    Ok(outputs)
}

/// Gradient of the selected scalar output with respect to the input vector.
pub fn input_gradient<T: Scalar>(
    network: &Network<T>,
    x: &[T],
    selector: OutputSelector,
) -> Result<Vec<T>, EngineError> {
    let jac = input_jacobian_batch(network, &Tensor2::row_vector(x), selector)?;
    Ok(jac.entries.into_vec())
}

/// Row `i` holds the input gradient of the selected output of sample `i`.
///
/// Rows are independent: a row of the batch result is bitwise equal to
/// [`input_gradient`] on that row alone.
pub fn input_jacobian_batch<T: Scalar>(
    network: &Network<T>,
    batch: &Tensor2<T>,
    selector: OutputSelector,
) -> Result<InputJacobian<T>, EngineError> {
    check_batch(network, batch)?;
    selector.validate(network.output_width())?;
    let mut tape = Tape::new();
    let leaves = parameter_leaves(&mut tape, network, false);
    let input = tape.leaf(batch.clone(), true);
    let output = record_network(&mut tape, network, input, &leaves);
    let seed = selector.seed(tape.value(output));
    let grads = tape.backward(output, seed);
    let entries = grads.get_or_zeros(input, batch.rows(), batch.cols());
    check_finite(&entries, "input gradient")?;
    Ok(InputJacobian { entries })
}

/// Sensitivities of the output at `output_step` to every input of every
/// sequence, indexed by lag.
///
/// Element `k` of the result is `n_sequences x p` and holds
/// `∂y[output_step] / ∂x[output_step - k]`; lags reaching before the first
/// step are exactly zero.
pub fn rnn_input_gradients_batch<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
    output_step: usize,
    selector: OutputSelector,
) -> Result<Vec<Tensor2<T>>, EngineError> {
    check_sequences(model, batch)?;
    if output_step >= model.seq_len {
        return Err(EngineError::StepOutOfRange {
            step: output_step,
            seq_len: model.seq_len,
        });
    }
    selector.validate(model.output_width())?;
    let mut tape = Tape::new();
    let rec = record_recurrent(&mut tape, model, batch, true, false, &[output_step]);
    let output = rec.outputs[0];
    let seed = selector.seed(tape.value(output));
    let grads = tape.backward(output, seed);
    let (n, p) = (batch.n_sequences(), batch.n_features());
    let mut by_lag = Vec::with_capacity(model.seq_len);
    for k in 0..model.seq_len {
        let g = if k <= output_step {
            grads.get_or_zeros(rec.inputs[output_step - k], n, p)
        } else {
            Tensor2::zeros(n, p)
        };
        check_finite(&g, "recurrent input gradient")?;
        by_lag.push(g);
    }
    Ok(by_lag)
}

/// Single-sequence form of [`rnn_input_gradients_batch`]: a `seq_len x p`
/// matrix whose row `k` is the gradient at lag `k` behind `output_step`.
pub fn rnn_input_gradients<T: Scalar>(
    model: &RecurrentNetwork<T>,
    sequence: &Tensor2<T>,
    output_step: usize,
    selector: OutputSelector,
) -> Result<Tensor2<T>, EngineError> {
    let batch = SequenceBatch::from_sequences(std::slice::from_ref(sequence), None)
        .map_err(|e| shape_err("recurrent input gradient", "a sequence", e))?;
    let by_lag = rnn_input_gradients_batch(model, &batch, output_step, selector)?;
    let rows: Vec<&[T]> = by_lag.iter().map(|g| g.row(0)).collect();
    Ok(Tensor2::from_rows(&rows).expect("equal widths"))
}

/// Mean loss over the batch and its gradient for every weight and bias.
pub fn parameter_gradients<T: Scalar>(
    network: &Network<T>,
    batch: &Tensor2<T>,
    targets: &Targets<T>,
    loss: LossKind,
) -> Result<ParameterGradients<T>, EngineError> {
    check_batch(network, batch)?;
    let mut tape = Tape::new();
    let leaves = parameter_leaves(&mut tape, network, true);
    let input = tape.leaf(batch.clone(), false);
    let output = record_network(&mut tape, network, input, &leaves);
    let (value, seed) = loss_and_gradient(loss, tape.value(output), targets)?;
    if !value.is_finite() {
        return Err(EngineError::NonFinite("loss"));
    }
    let grads = tape.backward(output, seed);
    let grads = collect_param_grads(&grads, &tape, &leaves)?;
    Ok(ParameterGradients { loss: value, grads })
}

/// Mean-squared-error gradients of a recurrent model against the batch's
/// targets. Many-to-many losses average over steps.
pub fn rnn_parameter_gradients<T: Scalar>(
    model: &RecurrentNetwork<T>,
    batch: &SequenceBatch<T>,
) -> Result<ParameterGradients<T>, EngineError> {
    check_sequences(model, batch)?;
    let targets = batch.targets().ok_or(EngineError::MissingTargets)?;
    let steps: Vec<usize> = match model.mode {
        SequenceMode::ManyToOne => vec![model.seq_len - 1],
        SequenceMode::ManyToMany => (0..model.seq_len).collect(),
    };
    if targets.cols() != steps.len() || model.output_width() != 1 {
        return Err(EngineError::MissingTargets);
    }
    let mut tape = Tape::new();
    let rec = record_recurrent(&mut tape, model, batch, false, true, &steps);
    let share = T::one() / T::lit(steps.len() as f64);
    let mut total = T::zero();
    let mut seeds = Vec::with_capacity(steps.len());
    for (i, &out) in rec.outputs.iter().enumerate() {
        let column = Tensor2::new(targets.rows(), 1, targets.column(i)).expect("column");
        let (value, seed) = loss_and_gradient(LossKind::Mse, tape.value(out), &Targets::Regression(column))?;
        total += value * share;
        seeds.push((out, seed.scale(share)));
    }
    if !total.is_finite() {
        return Err(EngineError::NonFinite("loss"));
    }
    let grads = tape.backward_many(&seeds);
    let grads = collect_param_grads(&grads, &tape, &rec.params)?;
    Ok(ParameterGradients { loss: total, grads })
}

fn collect_param_grads<T: Scalar>(
    grads: &Gradients<T>,
    tape: &Tape<T>,
    leaves: &[NodeId],
) -> Result<Vec<Tensor2<T>>, EngineError> {
    leaves
        .iter()
        .map(|&id| {
            let (r, c) = tape.value(id).shape();
            let g = grads.get_or_zeros(id, r, c);
            check_finite(&g, "parameter gradient").map(|_| g)
        })
        .collect()
}

/// Central differences `(f(x + h·e_j) - f(x - h·e_j)) / 2h` for every coordinate.
pub fn finite_difference_gradient<T: Scalar>(f: impl Fn(&[T]) -> T, x: &[T], step: T) -> Vec<T> {
    assert!(step > T::zero(), "finite-difference step must be positive");
    let mut probe = x.to_vec();
    let two_h = step + step;
    (0..x.len())
        .map(|j| {
            let orig = probe[j];
            probe[j] = orig + step;
            let up = f(&probe);
            probe[j] = orig - step;
            let down = f(&probe);
            probe[j] = orig;
            (up - down) / two_h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_mlp, build_rnn, Layer, ModelSpec};

    fn linear_unit(w: &[f64]) -> Network<f64> {
        Network::linear(Tensor2::row_vector(w))
    }

    #[test]
    fn identity_network_forwards_unchanged() {
        let net = Network::linear(Tensor2::<f64>::identity(2));
        let out = forward(&net, &Tensor2::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_unit_forward_and_gradient() {
        let net = linear_unit(&[3.0, -1.0]);
        let out = forward(&net, &Tensor2::row_vector(&[1.0, 1.0])).unwrap();
        assert_eq!(out.as_slice(), &[2.0]);
        for x in [[0.0, 0.0], [5.0, -2.0], [1e3, 7.5]] {
            let g = input_gradient(&net, &x, OutputSelector::Output(0)).unwrap();
            assert_eq!(g, vec![3.0, -1.0]);
        }
    }

    #[test]
    fn tanh_slope_at_zero() {
        let layer = Layer::new(Tensor2::row_vector(&[1.0]), vec![0.0], Activation::Tanh).unwrap();
        let net = Network::new(vec![layer]).unwrap();
        assert_eq!(
            input_gradient(&net, &[0.0], OutputSelector::Output(0)).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn dimension_and_selector_errors() {
        let net = linear_unit(&[3.0, -1.0]);
        let err = forward(&net, &Tensor2::row_vector(&[1.0, 2.0, 3.0])).unwrap_err();
        assert!(err.to_string().contains("2 input columns"), "{err}");
        assert!(matches!(
            input_gradient(&net, &[0.0, 0.0], OutputSelector::Output(1)),
            Err(EngineError::SelectorOutOfRange { index: 1, outputs: 1 })
        ));
    }

    #[test]
    fn jacobian_of_linear_unit_is_constant() {
        let net = linear_unit(&[3.0, -1.0]);
        let batch = Tensor2::new(5, 2, (0..10).map(|v| v as f64 * 0.37 - 1.0).collect()).unwrap();
        let jac = input_jacobian_batch(&net, &batch, OutputSelector::Output(0)).unwrap();
        for r in 0..5 {
            assert_eq!(jac.entries.row(r), &[3.0, -1.0]);
        }
    }

    #[test]
    fn dead_input_has_zero_column() {
        let spec = ModelSpec::mlp(&[3, 6, 1], &[Activation::Tanh, Activation::Linear], 4);
        let mut net: Network<f64> = build_mlp(&spec).unwrap();
        for r in 0..6 {
            net.layers_mut()[0].weight.set(r, 1, 0.0);
        }
        let batch = Tensor2::new(4, 3, (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let jac = input_jacobian_batch(&net, &batch, OutputSelector::Output(0)).unwrap();
        assert!(jac.entries.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_rows_equal_single_row_gradients() {
        let spec = ModelSpec::mlp(
            &[4, 7, 5, 2],
            &[Activation::Tanh, Activation::Relu, Activation::Softmax],
            21,
        );
        let net: Network<f64> = build_mlp(&spec).unwrap();
        let batch = Tensor2::new(6, 4, (0..24).map(|v| (v as f64 * 0.7).cos()).collect()).unwrap();
        for selector in [OutputSelector::Output(1), OutputSelector::PredictedClass] {
            let jac = input_jacobian_batch(&net, &batch, selector).unwrap();
            for r in 0..6 {
                let single = input_gradient(&net, batch.row(r), selector).unwrap();
                assert_eq!(jac.entries.row(r), single.as_slice());
            }
        }
    }

    #[test]
    fn least_squares_gradient() {
        let net = linear_unit(&[0.5, -0.25]);
        let x = Tensor2::from_rows(&[[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]]).unwrap();
        let y = Tensor2::from_rows(&[[1.0], [0.0], [2.0]]).unwrap();
        let g = parameter_gradients(&net, &x, &Targets::Regression(y.clone()), LossKind::Mse).unwrap();
        // 2/n · Xᵀ(Xw − y)
        let resid = forward(&net, &x).unwrap().add(&y.scale(-1.0));
        let expected = x.transpose_matmul(&resid).scale(2.0 / 3.0);
        for (a, b) in g.grads[0].as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = linear_unit(&[0.0, 0.0]);
        let g = parameter_gradients(
            &zero,
            &Tensor2::zeros(3, 2),
            &Targets::Regression(Tensor2::zeros(3, 1)),
            LossKind::Mse,
        )
        .unwrap();
        assert!(g.grads.iter().all(|t| t.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn memoryless_recurrence_only_touches_lag_zero() {
        let mut rnn: RecurrentNetwork<f64> = build_rnn(&ModelSpec::rnn(2, 3, 4, SequenceMode::ManyToOne, 5)).unwrap();
        rnn.recurrent_weight = Tensor2::zeros(3, 3);
        let seq = Tensor2::new(4, 2, (0..8).map(|v| (v as f64).sin()).collect()).unwrap();
        let g = rnn_input_gradients(&rnn, &seq, 3, OutputSelector::Output(0)).unwrap();
        assert!(g.row(0).iter().any(|&v| v != 0.0));
        for k in 1..4 {
            assert!(g.row(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_recurrence_matches_closed_form() {
        let (a, w): (f64, f64) = (0.7, 1.3);
        let head = Network::linear(Tensor2::row_vector(&[1.0]));
        let rnn = RecurrentNetwork::new(
            Tensor2::row_vector(&[w]),
            Tensor2::row_vector(&[a]),
            vec![0.0],
            Activation::Linear,
            head,
            SequenceMode::ManyToOne,
            5,
        )
        .unwrap();
        let seq = Tensor2::new(5, 1, vec![0.3, -1.0, 2.0, 0.1, 0.4]).unwrap();
        let g = rnn_input_gradients(&rnn, &seq, 4, OutputSelector::Output(0)).unwrap();
        for k in 0..5 {
            let expected = w * a.powi(k as i32);
            assert!((g.get(k, 0) - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
        // Earlier output steps see fewer lags; the rest are exactly zero.
        let g2 = rnn_input_gradients(&rnn, &seq, 1, OutputSelector::Output(0)).unwrap();
        assert_eq!(g2.get(0, 0), w);
        assert!((g2.get(1, 0) - w * a).abs() < 1e-15);
        assert!((2..5).all(|k| g2.get(k, 0) == 0.0));
        assert!(matches!(
            rnn_input_gradients(&rnn, &seq, 5, OutputSelector::Output(0)),
            Err(EngineError::StepOutOfRange { step: 5, seq_len: 5 })
        ));
    }

    #[test]
    fn finite_difference_basics() {
        let g = finite_difference_gradient(|x: &[f64]| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_difference_gradient(|_: &[f64]| 4.2, &[1.0, -2.0], 1e-5);
        assert!(g.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn selector_parsing() {
        assert_eq!("positive".parse::<OutputSelector>().unwrap(), OutputSelector::Output(1));
        assert_eq!("output:3".parse::<OutputSelector>().unwrap(), OutputSelector::Output(3));
        assert_eq!(
            "predicted".parse::<OutputSelector>().unwrap(),
            OutputSelector::PredictedClass
        );
        assert!("nope".parse::<OutputSelector>().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let spec = ModelSpec::mlp(&[3, 4, 1], &[Activation::Tanh, Activation::Linear], 2);
        let net64: Network<f64> = build_mlp(&spec).unwrap();
        let net32: Network<f32> = build_mlp(&spec).unwrap();
        let x = [0.2, -0.4, 0.9];
        let g64 = input_gradient(&net64, &x, OutputSelector::Output(0)).unwrap();
        let g32 = input_gradient(&net32, &[0.2f32, -0.4, 0.9], OutputSelector::Output(0)).unwrap();
        for (a, b) in g64.iter().zip(&g32) {
            assert!((a - *b as f64).abs() < 1e-5);
        }
    }
}
