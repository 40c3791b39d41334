use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Layer, ModelError, Network, RecurrentNetwork};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Whether a recurrent model emits one output per sequence or one per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    ManyToOne,
    ManyToMany,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `widths` lists every layer width including input and output;
    /// `activations` has one entry per weight layer.
    Mlp {
        widths: Vec<usize>,
        activations: Vec<Activation>,
    },
    Rnn {
        input_width: usize,
        hidden_width: usize,
        hidden_activation: Activation,
        /// Head widths after the hidden state, ending with the output width.
        head_widths: Vec<usize>,
        head_activations: Vec<Activation>,
        seq_len: usize,
        mode: SequenceMode,
    },
}

/// Everything needed to rebuild an untrained model bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub seed: u64,
}

impl ModelSpec {
    pub fn mlp(widths: &[usize], activations: &[Activation], seed: u64) -> Self {
        Self {
            architecture: Architecture::Mlp {
                widths: widths.to_vec(),
                activations: activations.to_vec(),
            },
            seed,
        }
    }

    /// Elman cell with a single linear output unit.
    pub fn rnn(input_width: usize, hidden_width: usize, seq_len: usize, mode: SequenceMode, seed: u64) -> Self {
        Self {
            architecture: Architecture::Rnn {
                input_width,
                hidden_width,
                hidden_activation: Activation::Tanh,
                head_widths: vec![1],
                head_activations: vec![Activation::Linear],
                seq_len,
                mode,
            },
            seed,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.architecture, Architecture::Rnn { .. })
    }
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> Tensor2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let values = (0..fan_out * fan_in)
        .map(|_| T::lit(rng.random_range(-limit..limit)))
        .collect();
    Tensor2::new(fan_out, fan_in, values).expect("sized buffer")
}

fn dense_stack<T: Scalar>(
    rng: &mut ChaCha8Rng,
    widths: &[usize],
    activations: &[Activation],
) -> Result<Network<T>, ModelError> {
    if widths.len() < 2 {
        return Err(ModelError::InvalidSpec(
            "need at least an input and an output width".into(),
        ));
    }
    if activations.len() != widths.len() - 1 {
        return Err(ModelError::InvalidSpec(format!(
            "{} activations for {} weight layers",
            activations.len(),
            widths.len() - 1
        )));
    }
    if let Some(w) = widths.iter().position(|&w| w == 0) {
        return Err(ModelError::InvalidSpec(format!("width {w} is zero")));
    }
    let layers = widths
        .windows(2)
        .zip(activations)
        .map(|(pair, &act)| {
            let weight = glorot(rng, pair[1], pair[0]);
            Layer::new(weight, vec![T::zero(); pair[1]], act)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Network::new(layers)
}

/// Builds a dense network with seeded uniform Glorot weights and zero biases.
pub fn build_mlp<T: Scalar>(spec: &ModelSpec) -> Result<Network<T>, ModelError> {
    match &spec.architecture {
        Architecture::Mlp { widths, activations } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            dense_stack(&mut rng, widths, activations)
        }
        Architecture::Rnn { .. } => Err(ModelError::InvalidSpec("expected an mlp spec".into())),
    }
}

/// Builds an Elman recurrent network. Weights are drawn in the order input,
/// recurrent, then head layers.
pub fn build_rnn<T: Scalar>(spec: &ModelSpec) -> Result<RecurrentNetwork<T>, ModelError> {
    match &spec.architecture {
        Architecture::Rnn {
            input_width,
            hidden_width,
            hidden_activation,
            head_widths,
            head_activations,
            seq_len,
            mode,
        } => {
            if *seq_len == 0 {
                return Err(ModelError::ZeroSequenceLength);
            }
            if *input_width == 0 || *hidden_width == 0 {
                return Err(ModelError::InvalidSpec(
                    "input and hidden widths must be at least 1".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let input_weight = glorot(&mut rng, *hidden_width, *input_width);
            let recurrent_weight = glorot(&mut rng, *hidden_width, *hidden_width);
            let mut widths = vec![*hidden_width];
            widths.extend_from_slice(head_widths);
            let head = dense_stack(&mut rng, &widths, head_activations)?;
            RecurrentNetwork::new(
                input_weight,
                recurrent_weight,
                vec![T::zero(); *hidden_width],
                *hidden_activation,
                head,
                *mode,
                *seq_len,
            )
        }
        Architecture::Mlp { .. } => Err(ModelError::InvalidSpec("expected an rnn spec".into())),
    }
}
