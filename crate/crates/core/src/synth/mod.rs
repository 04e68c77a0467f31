//! Synthetic benchmark graphs: LFR, attributed degree-corrected SBM, and the
//! Gaussian community attributes that decorate both.

mod attributes;
mod lfr;
mod powerlaw;
mod sbm;

use thiserror::Error;

use crate::graph::{cut_count, Graph, GraphError, Partition};

pub use attributes::{gen_attributes, AttributeParams};
pub use lfr::{lfr_generate, LfrParams};
pub use powerlaw::sample_powerlaw;
pub use sbm::{adcsbm_generate, AdcSbmParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("no connected realization after {0} attempts")]
    RetriesExhausted(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Fraction of edges that cross community boundaries.
pub fn empirical_mixing(g: &Graph, p: &Partition) -> Result<f64, GraphError> {
    if g.m() == 0 {
        return Err(GraphError::NoEdges);
    }
    Ok(cut_count(g, p)? as f64 / g.m() as f64)
}
