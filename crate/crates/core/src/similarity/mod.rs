//! Element-centric similarity between clusterings and the stepwise-drop
//! summaries built on it.

mod curve;
mod ecs;
mod summary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{curve_drop, RobustnessCurve};
pub use ecs::{
    disjoint_affinity, ecs, ecs_cover, ecs_general, element_graph, ppr_affinity,
    ppr_affinity_iterative, Cover,
};
pub use summary::{avg_drop_by_perturbation, avg_drop_by_strength, CurveKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("clusterings cover {0} and {1} nodes")]
    NodeCountMismatch(usize, usize),
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("node {0} belongs to no cluster")]
    Unassigned(usize),
    #[error("transition matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("pagerank iteration did not converge in {0} steps")]
    NoConvergence(usize),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("curve needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("initial score is zero; relative drop undefined")]
    ZeroInitial,
    #[error("curve levels must be strictly increasing")]
    UnorderedLevels,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("no curves for {0}")]
    EmptyCell(String),
}

/// PageRank damping `alpha` and hierarchy scaling `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcsParams {
    pub alpha: f64,
    pub r: f64,
}

impl Default for EcsParams {
    fn default() -> Self {
        Self { alpha: 0.9, r: 0.0 }
    }
}

impl EcsParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimilarityError::InvalidParam(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !self.r.is_finite() {
            return Err(SimilarityError::InvalidParam(format!("r = {}", self.r)));
        }
        Ok(())
    }
}
