//! Attribute noise and node-incident edge deletion.

mod attributes;
mod deletion;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;

pub use attributes::{perturb_attributes, perturb_location, perturb_scale, AttributeKind};
pub use deletion::{
    apply_edge_deletion, betweenness_ranks, incident_edges, select_count, select_nodes_random,
    select_nodes_targeted, DeletionKind, EdgeDeletionSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("node fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("attribute matrix is not finite")]
    NonFinite,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Location and scale grids from the benchmark tables.
pub const LOCATION_LEVELS: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];
pub const SCALE_LEVELS: [f64; 5] = [1.0, 5.0, 10.0, 15.0, 20.0];
/// Node fractions for random and targeted edge deletion.
pub const DELETION_FRACTIONS: [f64; 8] = [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

/// Every perturbation family in the benchmark, attribute, structural and adversarial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Location,
    Scale,
    Random,
    Targeted,
    Nettack,
    Metattack,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 6] = [
        PerturbationKind::Location,
        PerturbationKind::Scale,
        PerturbationKind::Random,
        PerturbationKind::Targeted,
        PerturbationKind::Nettack,
        PerturbationKind::Metattack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Location => "location",
            PerturbationKind::Scale => "scale",
            PerturbationKind::Random => "random",
            PerturbationKind::Targeted => "targeted",
            PerturbationKind::Nettack => "nettack",
            PerturbationKind::Metattack => "metattack",
        }
    }

    pub fn is_attribute(self) -> bool {
        matches!(self, PerturbationKind::Location | PerturbationKind::Scale)
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, PerturbationKind::Nettack | PerturbationKind::Metattack)
    }

    /// Default level grid.
    pub fn levels(self) -> Vec<f64> {
        match self {
            PerturbationKind::Location => LOCATION_LEVELS.to_vec(),
            PerturbationKind::Scale => SCALE_LEVELS.to_vec(),
            PerturbationKind::Random | PerturbationKind::Targeted => DELETION_FRACTIONS.to_vec(),
            // fraction of nodes targeted
            PerturbationKind::Nettack => vec![0.1],
            // global flip budget as a fraction of the edge count
            PerturbationKind::Metattack => vec![0.05],
        }
    }
}

impl std::fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown perturbation `{s}`"))
    }
}
