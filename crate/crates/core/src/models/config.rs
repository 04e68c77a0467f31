use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The six detectors under study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Gcn,
    Gat,
    Sage,
    MinCut,
    DiffPool,
    DMoN,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Gcn,
        Architecture::Gat,
        Architecture::Sage,
        Architecture::MinCut,
        Architecture::DiffPool,
        Architecture::DMoN,
    ];

    pub fn is_supervised(self) -> bool {
        matches!(self, Architecture::Gcn | Architecture::Gat | Architecture::Sage)
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Gcn => "gcn",
            Architecture::Gat => "gat",
            Architecture::Sage => "sage",
            Architecture::MinCut => "mincut",
            Architecture::DiffPool => "diffpool",
            Architecture::DMoN => "dmon",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

/// Architecture plus training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// Hidden widths; for GAT this is the per-head width of the first layer.
    pub hidden: Vec<usize>,
    pub heads: usize,
    pub lr: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub self_loops: bool,
    pub leaky_slope: f64,
    pub ortho_weight: f64,
    pub collapse_weight: f64,
    pub link_weight: f64,
    pub entropy_weight: f64,
    /// Cluster count for unsupervised heads; `None` uses the label count.
    pub k: Option<usize>,
    /// Fraction of each class used for supervised training.
    pub train_fraction: f64,
    /// Divide features by the RMS of the training feature matrix.
    #[serde(default = "default_true")]
    pub scale_inputs: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn new(arch: Architecture) -> Self {
        let base = Self {
            arch,
            hidden: vec![32],
            heads: 1,
            lr: 0.01,
            epochs: 200,
            dropout: 0.1,
            self_loops: true,
            leaky_slope: 0.2,
            ortho_weight: 1.0,
            collapse_weight: 1.0,
            link_weight: 1.0,
            entropy_weight: 1.0,
            k: None,
            train_fraction: 0.1,
            scale_inputs: true,
        };
        match arch {
            Architecture::Gcn => base,
            Architecture::Gat => Self {
                hidden: vec![8],
                heads: 8,
                ..base
            },
            Architecture::Sage => Self {
                hidden: vec![128],
                ..base
            },
            Architecture::MinCut | Architecture::DiffPool | Architecture::DMoN => Self {
                hidden: vec![64],
                lr: 0.001,
                epochs: 1000,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(format!("{}: hidden widths must be positive", self.arch));
        }
        if self.arch == Architecture::Gat && self.heads == 0 {
            return Err("gat: heads must be positive".into());
        }
        if !(self.lr > 0.0) {
            return Err(format!("{}: learning rate must be positive", self.arch));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("{}: dropout must lie in [0, 1)", self.arch));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(format!("{}: train_fraction must lie in (0, 1]", self.arch));
        }
        if self.k == Some(0) || self.k == Some(1) {
            return Err(format!("{}: k must be at least 2", self.arch));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_settings() {
        let gcn = ModelConfig::new(Architecture::Gcn);
        assert_eq!((gcn.hidden.clone(), gcn.lr, gcn.dropout), (vec![32], 0.01, 0.1));
        let gat = ModelConfig::new(Architecture::Gat);
        assert_eq!((gat.heads, gat.hidden[0]), (8, 8));
        assert_eq!(ModelConfig::new(Architecture::Sage).hidden, vec![128]);
        let dmon = ModelConfig::new(Architecture::DMoN);
        assert_eq!((dmon.hidden[0], dmon.lr, dmon.epochs, dmon.collapse_weight), (64, 0.001, 1000, 1.0));
        assert_eq!(ModelConfig::new(Architecture::MinCut).ortho_weight, 1.0);
        for a in Architecture::ALL {
            assert!(ModelConfig::new(a).validate().is_ok());
        }
    }

    #[test]
    fn names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
        assert!("gin".parse::<Architecture>().is_err());
    }
}
