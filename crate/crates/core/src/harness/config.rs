use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::{MetattackConfig, NettackConfig};
use crate::models::{Architecture, ModelConfig};
use crate::perturb::PerturbationKind;
use crate::similarity::EcsParams;
use crate::synth::{AdcSbmParams, AttributeParams, LfrParams};

use super::HarnessError;

/// Where graphs come from. For generators the matrix strength overrides
/// `mu` (LFR) or `rho` (ADC-SBM).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Lfr {
        #[serde(default = "default_lfr")]
        lfr: LfrParams,
        #[serde(default)]
        attributes: AttributeParams,
    },
    Adcsbm {
        #[serde(default)]
        sbm: AdcSbmParams,
        #[serde(default)]
        attributes: AttributeParams,
    },
    /// A `.content` / `.cites` pair; strengths are ignored.
    Files { content: PathBuf, cites: PathBuf },
}

fn default_lfr() -> LfrParams {
    LfrParams::default()
}

impl DatasetSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DatasetSpec::Lfr { .. } => "lfr",
            DatasetSpec::Adcsbm { .. } => "adcsbm",
            DatasetSpec::Files { .. } => "files",
        }
    }

    pub fn is_synthetic(&self) -> bool {
        !matches!(self, DatasetSpec::Files { .. })
    }
}

/// One perturbation family and its intensity grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Defaults to the benchmark grid of the kind.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind) -> Self {
        Self { kind, levels: None }
    }

    pub fn levels(&self) -> Vec<f64> {
        self.levels.clone().unwrap_or_else(|| self.kind.levels())
    }
}

/// Retrain on the perturbed input, or evaluate the clean model on it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Poisoning,
    Evasion,
}

/// Partial hyperparameter override applied on top of the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverride {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    pub train_fraction: Option<f64>,
    pub scale_inputs: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label written in the `dataset` column; defaults to the dataset kind.
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetSpec,
    #[serde(default = "all_models")]
    pub models: Vec<Architecture>,
    #[serde(default = "default_strengths")]
    pub strengths: Vec<f64>,
    #[serde(default = "default_perturbations")]
    pub perturbations: Vec<PerturbationSpec>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub regime: Regime,
    /// Attempts per training run before a cell is recorded as failed.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Write wall-clock times into `runtime_ms`; off keeps output byte-stable.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub ecs: EcsParams,
    #[serde(default)]
    pub nettack: NettackConfig,
    #[serde(default)]
    pub metattack: MetattackConfig,
    #[serde(default)]
    pub model_overrides: BTreeMap<Architecture, ModelOverride>,
}

fn all_models() -> Vec<Architecture> {
    Architecture::ALL.to_vec()
}

fn default_strengths() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5]
}

fn default_perturbations() -> Vec<PerturbationSpec> {
    [PerturbationKind::Location, PerturbationKind::Scale, PerturbationKind::Random, PerturbationKind::Targeted]
        .into_iter()
        .map(PerturbationSpec::new)
        .collect()
}

fn default_realizations() -> usize {
    50
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_attempts() -> usize {
    3
}

impl ExperimentConfig {
    /// Benchmark defaults on the given dataset.
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            name: None,
            dataset,
            models: all_models(),
            strengths: default_strengths(),
            perturbations: default_perturbations(),
            realizations: default_realizations(),
            seed: 0,
            out_dir: default_out(),
            jobs: 0,
            regime: Regime::default(),
            max_attempts: default_attempts(),
            record_timing: false,
            ecs: EcsParams::default(),
            nettack: NettackConfig::default(),
            metattack: MetattackConfig::default(),
            model_overrides: BTreeMap::new(),
        }
    }

    pub fn dataset_name(&self) -> &str {
        self.name.as_deref().unwrap_or_else(|| self.dataset.kind_name())
    }

    /// Strength grid actually iterated: file datasets have a single cell.
    pub fn effective_strengths(&self) -> Vec<f64> {
        if self.dataset.is_synthetic() {
            self.strengths.clone()
        } else {
            vec![0.0]
        }
    }

    pub fn model_config(&self, arch: Architecture) -> ModelConfig {
        let mut cfg = ModelConfig::new(arch);
        if let Some(o) = self.model_overrides.get(&arch) {
            if let Some(v) = o.epochs {
                cfg.epochs = v;
            }
            if let Some(v) = o.lr {
                cfg.lr = v;
            }
            if let Some(v) = &o.hidden {
                cfg.hidden = v.clone();
            }
            if let Some(v) = o.dropout {
                cfg.dropout = v;
            }
            if let Some(v) = o.train_fraction {
                cfg.train_fraction = v;
            }
            if let Some(v) = o.scale_inputs {
                cfg.scale_inputs = v;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.models.is_empty() || self.perturbations.is_empty() {
            return bad("model and perturbation lists must be non-empty".into());
        }
        if self.dataset.is_synthetic() && self.strengths.is_empty() {
            return bad("strength grid must be non-empty".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        for p in &self.perturbations {
            let levels = p.levels();
            if levels.is_empty() {
                return bad(format!("{} has an empty level grid", p.kind));
            }
            if levels.iter().any(|l| !l.is_finite()) {
                return bad(format!("{} has a non-finite level", p.kind));
            }
        }
        let mut kinds: Vec<_> = self.perturbations.iter().map(|p| p.kind).collect();
        kinds.sort();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return bad("a perturbation kind is listed twice".into());
        }
        for &arch in &self.models {
            self.model_config(arch).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        self.ecs.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.dataset {
            DatasetSpec::Lfr { lfr, attributes } => {
                for &mu in &self.strengths {
                    LfrParams { mu, ..lfr.clone() }.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                }
                attributes.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
            DatasetSpec::Adcsbm { sbm, attributes } => {
                for &rho in &self.strengths {
                    AdcSbmParams { rho, ..sbm.clone() }
                        .validate()
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                }
                attributes.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
            DatasetSpec::Files { .. } => {}
        }
        Ok(())
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_str(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
