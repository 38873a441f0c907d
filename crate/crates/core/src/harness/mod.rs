//! Experiment configs, single runs, seed sweeps, the on-disk store,
//! summary statistics, reports and external feature ingestion.

mod analyze;
mod config;
mod ingest;
mod report;
mod run;
mod stats;
mod store;
mod sweep;

pub use analyze::{analyze_run, AnalysisOptions, RunAnalysis};
pub use config::{ExperimentConfig, Method};
pub use ingest::{decode_features, encode_features, ingest_features, FeatureDtype};
pub use report::{collect_records, posdis_histogram, write_report, SweepSummary};
pub use run::{harvest_protocol, load_run, run_experiment, run_or_load, ExperimentRecord, LoadedRun, RunOutput};
pub use stats::{cohens_d, mean, std_dev, welch_t, WelchTest};
pub use store::{Store, STORE_ENV};
pub use sweep::run_sweep;

use thiserror::Error;

use crate::agents::AgentError;
use crate::analysis::AnalysisError;
use crate::env::EnvError;
use crate::metrics::MetricError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("malformed record {path}: {msg}")]
    Record { path: String, msg: String },
    #[error("malformed feature file at byte {offset}: {msg}")]
    Features { offset: usize, msg: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}
