//! Robustness benchmarking for GNN-based community detection.

pub mod adversarial;
pub mod graph;
pub mod harness;
pub mod models;
pub mod perturb;
pub mod scalar;
pub mod similarity;
pub mod synth;
pub mod tensor;

pub use scalar::Scalar;

/// Default-precision aliases.
pub type Tensor = tensor::Tensor<f64>;
pub type TrainedModel = models::TrainedModel<f64>;
pub type AttackOutcome = adversarial::AttackOutcome<f64>;
