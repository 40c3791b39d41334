//! Sensitivity-based feature importance for small feed-forward and recurrent
//! networks, with the differentiable engine, training loop and data pipeline
//! needed to produce the models being explained.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the data pipeline, model files and
//! gradient checks use.

pub mod data;
pub mod engine;
pub mod explain;
pub mod models;
pub mod scalar;
pub mod tensor;
pub mod training;
pub mod validation;

pub use scalar::Scalar;

pub type Tensor = tensor::Tensor2<f64>;
pub type Network = models::Network<f64>;
pub type RecurrentNetwork = models::RecurrentNetwork<f64>;
pub type SequenceBatch = data::SequenceBatch<f64>;
pub type InputJacobian = engine::InputJacobian<f64>;

pub type TensorF32 = tensor::Tensor2<f32>;
pub type NetworkF32 = models::Network<f32>;
pub type RecurrentNetworkF32 = models::RecurrentNetwork<f32>;
pub type SequenceBatchF32 = data::SequenceBatch<f32>;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Explain(#[from] explain::ExplainError),
    #[error(transparent)]
    Validation(#[from] validation::ValidationError),
}
