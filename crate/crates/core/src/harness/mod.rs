//! Experiment orchestration: configs, datasets, the run matrix, result
//! files and summary tables.

mod bundle;
mod config;
mod dataset;
mod records;
mod report;
mod runner;
mod seed;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use bundle::{read_bundle, read_partition, write_bundle, write_partition};
pub use config::{DatasetSpec, ExperimentConfig, ModelOverride, PerturbationSpec, Regime};
pub use dataset::{load_content_cites, ContentCites};
pub use records::{read_csv, read_json, write_csv, write_json, CsvSink, RunRecord, CSV_HEADER};
pub use report::{emit_plot_data, summarize, AdversarialRow, DropTable, PlotRow, Summary};
pub use runner::{apply_perturbation, generate_graph, run_matrix, train_and_score, Failure, MatrixOutcome, Perturbed};
pub use seed::{derive_seed, SeedKey};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data: {0}")]
    Data(String),
    #[error("runtime: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        HarnessError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }

    /// Process exit code: 1 config, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Parse { .. } | HarnessError::Io { .. } | HarnessError::Data(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}
