//! Supervised node classifiers and unsupervised pooling clusterers.

mod checkpoint;
mod config;
mod layers;
mod losses;
mod train;

use thiserror::Error;

use crate::graph::{GraphError, Partition};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Architecture, ModelConfig};
pub use layers::{
    gat_forward, gat_head, gcn_forward, gcn_layer, mean_aggregator, normalize_adjacency, sage_forward, sage_layer,
    AttentionEdges, GraphContext, HeadVars,
};
pub use losses::{
    diffpool_step, diffpool_terms, dmon_loss, dmon_terms, mincut_losses, mincut_terms, DiffPoolStep,
};
pub use train::{fit, forward, init_params, objective, rms_scale, stratified_split, train_supervised, train_unsupervised, TrainedModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("node {0} has no neighbors and no self-loop")]
    IsolatedNode(usize),
    #[error("degenerate loss: {0}")]
    Degenerate(String),
    #[error("non-finite value in {op} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, op: &'static str },
    #[error("feature matrix has {rows} rows for {n} nodes")]
    FeatureRows { rows: usize, n: usize },
    #[error("assignment row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-wise argmax; ties go to the lowest column.
pub fn extract_partition<T: Scalar>(scores: &Tensor<T>) -> Partition {
    let k = scores.cols().max(1);
    let labels = (0..scores.rows())
        .map(|i| {
            let row = scores.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Partition::new(labels, k).expect("labels below column count")
}

/// Checks that `s` is a soft assignment: non-negative rows summing to one.
pub fn check_soft_assignment<T: Scalar>(s: &Tensor<T>, tol: f64) -> Result<(), ModelError> {
    for i in 0..s.rows() {
        let row = s.row(i);
        let sum: f64 = row.iter().map(|v| v.to_f64_lossy()).sum();
        if (sum - 1.0).abs() > tol || row.iter().any(|v| v.to_f64_lossy() < 0.0) {
            return Err(ModelError::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}
