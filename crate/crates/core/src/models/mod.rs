//! Feed-forward and recurrent network containers and their seeded builders.

mod io;
mod spec;

pub use io::{
    read_bundle, write_bundle, ArrayDescriptor, BundleHeader, ModelBundle, TrainedModel, BUNDLE_MAGIC, FORMAT_VERSION,
};
pub use spec::{build_mlp, build_rnn, Architecture, ModelSpec, SequenceMode};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown activation `{0}` (expected linear, relu, tanh or softmax)")]
    UnknownActivation(String),
    #[error("softmax is only allowed on the final layer (found on layer {0})")]
    SoftmaxNotFinal(usize),
    #[error("layer {layer}: weight is {found_rows}x{found_cols}, expected {expected_rows}x{expected_cols}")]
    LayerShape {
        layer: usize,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("sequence length must be at least 1")]
    ZeroSequenceLength,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element-wise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    /// Row-wise softmax; final layer only.
    Softmax,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "identity" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "softmax" => Ok(Activation::Softmax),
            _ => Err(ModelError::UnknownActivation(s.to_string())),
        }
    }
}

/// One dense layer: `activation(x · weightᵀ + bias)`.
///
/// `weight` is `outputs x inputs`; `bias` is a `1 x outputs` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Tensor2<T>,
    pub bias: Tensor2<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weight: Tensor2<T>, bias: Vec<T>, activation: Activation) -> Result<Self, ModelError> {
        if bias.len() != weight.rows() {
            return Err(ModelError::InvalidSpec(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self {
            weight,
            bias: Tensor2::row_vector(&bias),
            activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }
}

/// A stack of dense layers mapping a feature vector to an output vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::InvalidSpec("a network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.input_width() != prev.output_width() {
                return Err(ModelError::LayerShape {
                    layer: i + 1,
                    expected_rows: next.output_width(),
                    expected_cols: prev.output_width(),
                    found_rows: next.weight.rows(),
                    found_cols: next.weight.cols(),
                });
            }
        }
        let last = layers.len() - 1;
        if let Some(i) = layers[..last].iter().position(|l| l.activation == Activation::Softmax) {
            return Err(ModelError::SoftmaxNotFinal(i));
        }
        Ok(Self { layers })
    }

    /// A single linear layer with the given weight rows and zero bias.
    pub fn linear(weight: Tensor2<T>) -> Self {
        let bias = vec![T::zero(); weight.rows()];
        Self {
            layers: vec![Layer::new(weight, bias, Activation::Linear).expect("bias matches")],
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

/// Single-layer Elman cell followed by a dense output head.
///
/// `h_s = act(x_s · input_weightᵀ + h_{s-1} · recurrent_weightᵀ + hidden_bias)`
/// with `h_{-1} = 0`. The head maps each hidden state to an output.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNetwork<T> {
    pub input_weight: Tensor2<T>,
    pub recurrent_weight: Tensor2<T>,
    pub hidden_bias: Tensor2<T>,
    pub hidden_activation: Activation,
    pub head: Network<T>,
    pub mode: SequenceMode,
    pub seq_len: usize,
}

impl<T: Scalar> RecurrentNetwork<T> {
    pub fn new(
        input_weight: Tensor2<T>,
        recurrent_weight: Tensor2<T>,
        hidden_bias: Vec<T>,
        hidden_activation: Activation,
        head: Network<T>,
        mode: SequenceMode,
        seq_len: usize,
    ) -> Result<Self, ModelError> {
        let hidden = input_weight.rows();
        if seq_len == 0 {
            return Err(ModelError::ZeroSequenceLength);
        }
        if recurrent_weight.shape() != (hidden, hidden) {
            return Err(ModelError::InvalidSpec(format!(
                "recurrent weight is {}x{}, expected {hidden}x{hidden}",
                recurrent_weight.rows(),
                recurrent_weight.cols()
            )));
        }
        if hidden_bias.len() != hidden {
            return Err(ModelError::InvalidSpec(format!(
                "hidden bias has length {}, expected {hidden}",
                hidden_bias.len()
            )));
        }
        if hidden_activation == Activation::Softmax {
            return Err(ModelError::InvalidSpec("softmax cannot be a hidden activation".into()));
        }
        if head.input_width() != hidden {
            return Err(ModelError::InvalidSpec(format!(
                "output head expects width {}, hidden width is {hidden}",
                head.input_width()
            )));
        }
        Ok(Self {
            input_weight,
            recurrent_weight,
            hidden_bias: Tensor2::row_vector(&hidden_bias),
            hidden_activation,
            head,
            mode,
            seq_len,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_weight.cols()
    }

    pub fn hidden_width(&self) -> usize {
        self.input_weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.head.output_width()
    }

    /// Same weights, different output mode.
    pub fn with_mode(&self, mode: SequenceMode) -> Self {
        Self { mode, ..self.clone() }
    }
}

/// Fixed-order access to every trainable tensor of a model.
///
/// Biases are stored as `1 x n` rows so all parameters share one type.
pub trait Parameterized<T: Scalar> {
    fn parameters(&self) -> Vec<&Tensor2<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor2<T>>;
    /// `true` for weight matrices (subject to the ℓ1 penalty), `false` for biases.
    fn penalized(&self) -> Vec<bool>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.as_slice().len()).sum()
    }
}

impl<T: Scalar> Parameterized<T> for Network<T> {
    fn parameters(&self) -> Vec<&Tensor2<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn penalized(&self) -> Vec<bool> {
        self.layers.iter().flat_map(|_| [true, false]).collect()
    }
}

impl<T: Scalar> Parameterized<T> for RecurrentNetwork<T> {
    fn parameters(&self) -> Vec<&Tensor2<T>> {
        let mut out = vec![&self.input_weight, &self.recurrent_weight, &self.hidden_bias];
        out.extend(self.head.parameters());
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let mut out = vec![
            &mut self.input_weight,
            &mut self.recurrent_weight,
            &mut self.hidden_bias,
        ];
        out.extend(self.head.parameters_mut());
        out
    }

    fn penalized(&self) -> Vec<bool> {
        let mut out = vec![true, true, false];
        out.extend(self.head.penalized());
        out
    }
}

/// Copies all parameters into one flat vector, in `parameters()` order.
pub fn flatten_parameters<T: Scalar, M: Parameterized<T>>(model: &M) -> Vec<T> {
    model
        .parameters()
        .iter()
        .flat_map(|p| p.as_slice().iter().copied())
        .collect()
}

/// Inverse of [`flatten_parameters`].
pub fn assign_parameters<T: Scalar, M: Parameterized<T>>(model: &mut M, flat: &[T]) {
    let mut offset = 0;
    for p in model.parameters_mut() {
        let n = p.as_slice().len();
        p.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    assert_eq!(offset, flat.len(), "flat parameter vector length");
}
