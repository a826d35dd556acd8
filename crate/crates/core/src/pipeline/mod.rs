//! Train, label, analyse and report, with every artifact written under one
//! output directory.
//!
//! ```text
//! <out>/config.json
//! <out>/zoo/<KIND>/rate-<c>_alpha-<a>_seed-<i>.json
//! <out>/evaluate/{labels.csv, heatmap.csv, heatmap_alpha-<a>.svg, coverage.json}
//! <out>/schelling/<KIND>_alpha-<a>/{table_total,table_other}.{json,csv}
//! <out>/schelling/<KIND>_alpha-<a>/{ssd.json, equilibria.json, coverage.json}
//! <out>/schelling/<KIND>_alpha-<a>/{schelling_total,schelling_other}.svg
//! <out>/report/{bundle.json, metrics.csv, bootstrap.csv}
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AlgorithmKind, EpisodeStats, TrainConfig};
use crate::egta::{EgtaError, PolicySnapshot};
use crate::env::EnvError;

mod commands;
mod config;
pub mod svg;

pub use commands::{
    cmd_all, cmd_evaluate, cmd_report, cmd_schelling, cmd_train, CellCoverage, EquilibriumChoice,
    EvaluateSummary, KindReport, ReportBundle, SchellingSummary, TrainSummary,
};
pub use config::{hash_json, sub_seed, EnvSettings, EvalSettings, ExperimentConfig, TrainSettings};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path} was trained with config {found}, expected {expected}; use a fresh output directory")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("missing upstream artifact: {0}")]
    Missing(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Egta(#[from] EgtaError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// One trained team and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamFile {
    /// Hash of `train`.
    pub config_hash: String,
    pub kind: AlgorithmKind,
    pub rate: f64,
    pub alpha: f64,
    pub seed_index: usize,
    pub train: TrainConfig<f64>,
    /// Statistics of the last training episodes.
    pub final_episodes: Vec<EpisodeStats>,
    pub snapshots: Vec<PolicySnapshot<f64>>,
}

/// Output directory layout.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn team(&self, kind: AlgorithmKind, rate: f64, alpha: f64, seed_index: usize) -> PathBuf {
        self.root.join("zoo").join(kind.name()).join(format!(
            "rate-{}_alpha-{}_seed-{seed_index}.json",
            fmt_num(rate),
            fmt_num(alpha)
        ))
    }

    pub fn evaluate(&self) -> PathBuf {
        self.root.join("evaluate")
    }

    pub fn schelling(&self, kind: AlgorithmKind, alpha: f64) -> PathBuf {
        self.root
            .join("schelling")
            .join(format!("{}_alpha-{}", kind.name(), fmt_num(alpha)))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}
