//! Post-training probes of frozen protocols: position zeroing, cross-property
//! transfer, single-message regression, bandwidth allocation and channel
//! selectivity.

mod bandwidth;
mod intervention;
mod regression;
mod tabular;
mod transfer;

pub use bandwidth::{bandwidth_correlation, Bandwidth};
pub use intervention::{continuous_selectivity, position_zero_intervention, selectivity, InterventionResult, PairPredictor, Selectivity};
pub use regression::{single_message_regression, RegressionResult};
pub use tabular::TabularReceiver;
pub use transfer::{cross_property_transfer, transfer_on_messages, TransferConfig, TransferResult};

use thiserror::Error;

use crate::agents::AgentError;
use crate::env::EnvError;
use crate::tensor::TensorError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("position {position} out of range for {positions} positions")]
    Position { position: usize, positions: usize },
    #[error("need at least {needed} properties, got {got}")]
    TooFewProperties { needed: usize, got: usize },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
