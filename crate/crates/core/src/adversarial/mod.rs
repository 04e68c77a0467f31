//! Reduced-fidelity structure and attribute attacks: greedy targeted
//! Nettack and first-order Metattack, both driven by a linearized GCN
//! surrogate `Â²XW`.
//!
//! Metattack here takes the gradient of the self-training loss with respect
//! to the adjacency at the inner optimum, treating the trained weights as
//! constants. It does not differentiate through the training trajectory.

mod cooccurrence;
mod degree_test;
mod metattack;
mod nettack;
mod surrogate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::models::ModelError;
use crate::tensor::{Tensor, TensorError};

pub use cooccurrence::{cooccurrence_admissible, is_binary, CooccurrenceIndex};
pub use degree_test::{degree_likelihood_test, powerlaw_alpha, powerlaw_log_likelihood, DegreeTest, D_MIN};
pub use metattack::{adjacency_gradient_dense, adjacency_gradient_sparse, metattack, MetattackConfig};
pub use nettack::{nettack, nettack_attack, NettackConfig};
pub use surrogate::{train_surrogate, Surrogate, SurrogateConfig};

#[derive(Debug, Error)]
pub enum AdversarialError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("target {target} out of range for {n} nodes")]
    InvalidTarget { target: usize, n: usize },
    #[error("no degree reaches the power-law cutoff {0}")]
    NoTail(usize),
    #[error("invalid attack setting: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One applied perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Flip {
    Edge { u: usize, v: usize, added: bool },
    Feature { node: usize, feature: usize, delta: f64 },
}

/// A flip together with the target it was chosen for and its surrogate score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipRecord {
    #[serde(flatten)]
    pub flip: Flip,
    pub target: Option<usize>,
    pub score: f64,
}

/// Attacked graph and attributes plus the audit trail of flips.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome<T> {
    pub graph: Graph,
    pub x: Tensor<T>,
    pub flips: Vec<FlipRecord>,
}

impl<T> AttackOutcome<T> {
    pub fn edge_flips(&self) -> usize {
        self.flips.iter().filter(|f| matches!(f.flip, Flip::Edge { .. })).count()
    }

    pub fn feature_flips(&self) -> usize {
        self.flips.len() - self.edge_flips()
    }
}

/// Serializes flips as JSON lines.
pub fn write_flips<W: std::io::Write>(flips: &[FlipRecord], mut w: W) -> std::io::Result<()> {
    for f in flips {
        serde_json::to_writer(&mut w, f)?;
        writeln!(w)?;
    }
    Ok(())
}
