//! Oracle pretraining, population-based iterated learning, the LazImpa
//! baseline and the downstream outcome predictor.

mod data;
mod downstream;
mod entropy;
mod il;
mod lazimpa;
mod oracle;

pub use data::{evaluate_pairs, pair_rows, score_predictions, Accuracy, BatchPlan, Prepared};
pub use downstream::{median_labels, train_downstream_predictor, DownstreamResult};
pub use il::{build_sender, scene_messages};
pub use entropy::{empirical_entropy, entropy_floor, entropy_regularizer, soft_entropy};
pub use il::{train_iterated_learning, IlOutcome};
pub use lazimpa::{train_lazimpa_baseline, LazImpaOutcome};
pub use oracle::{pretrain_oracle, OracleOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentError;
use crate::env::EnvError;
use crate::tensor::{ChannelSample, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("oracle diverged at epoch {epoch} (seed {seed}): {detail}")]
    OracleDiverged { seed: u64, epoch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sender_lr: f64,
    pub receiver_lr: f64,
    pub population_size: usize,
    pub reset_interval: usize,
    pub temperature_start: f64,
    pub temperature_end: f64,
    pub soft_warmup: usize,
    pub entropy_coeff: f64,
    pub entropy_floor_fraction: f64,
    pub grad_clip: f64,
    pub oracle_epochs: usize,
    pub oracle_lr: f64,
    /// Always-on speaker entropy penalty of the LazImpa baseline.
    pub lazimpa_entropy: f64,
    /// Per-property loss weights; empty means unweighted.
    pub loss_weights: Vec<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 400,
            batch_size: 64,
            sender_lr: 1e-3,
            receiver_lr: 3e-3,
            population_size: 3,
            reset_interval: 40,
            temperature_start: 2.0,
            temperature_end: 0.5,
            soft_warmup: 30,
            entropy_coeff: 0.03,
            entropy_floor_fraction: 0.1,
            grad_clip: 1.0,
            oracle_epochs: 100,
            oracle_lr: 1e-3,
            lazimpa_entropy: 0.01,
            loss_weights: Vec::new(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.population_size == 0 || self.reset_interval == 0 {
            return bad("epochs, batch_size, population_size and reset_interval must be positive");
        }
        let rates = [self.sender_lr, self.receiver_lr, self.oracle_lr, self.grad_clip, self.temperature_start, self.temperature_end];
        if rates.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("learning rates, grad_clip and temperatures must be positive");
        }
        if [self.entropy_coeff, self.entropy_floor_fraction, self.lazimpa_entropy].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("entropy settings must be non-negative");
        }
        if self.loss_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("loss weights must be positive");
        }
        Ok(())
    }

    /// Linear anneal from `temperature_start` at epoch 0 to
    /// `temperature_end` at the final epoch.
    pub fn temperature(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.temperature_start;
        }
        let f = epoch as f64 / (self.epochs - 1) as f64;
        self.temperature_start + (self.temperature_end - self.temperature_start) * f
    }

    pub fn sample_mode(&self, epoch: usize) -> ChannelSample {
        if epoch < self.soft_warmup {
            ChannelSample::Soft
        } else {
            ChannelSample::Hard
        }
    }

    /// Receivers are re-initialized at the start of these epochs.
    pub fn is_reset_epoch(&self, epoch: usize) -> bool {
        epoch > 0 && epoch < self.epochs && epoch % self.reset_interval == 0
    }

    /// Completed resets by the start of `epoch`.
    pub fn resets_before(&self, epoch: usize) -> usize {
        (1..=epoch.min(self.epochs.saturating_sub(1))).filter(|e| self.is_reset_epoch(*e)).count()
    }

    pub fn total_resets(&self) -> usize {
        self.resets_before(self.epochs)
    }
}

/// A NaN or infinity during training. The run stops here.
#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityEvent {
    pub epoch: usize,
    pub step: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: Vec<f64>,
    /// Empirical entropy of eval-mode symbols per head, in nats.
    pub head_entropy: Vec<f64>,
    /// Steps in which the entropy regularizer was active, per head.
    pub entropy_active: Vec<usize>,
    pub temperature: f64,
    pub resets_so_far: usize,
}

impl EpochLog {
    pub fn csv_header(n_props: usize, n_heads: usize) -> String {
        let mut cols = vec!["epoch".to_string(), "train_loss".into(), "temperature".into(), "resets".into()];
        cols.extend((0..n_props).map(|p| format!("train_acc_{p}")));
        cols.extend((0..n_heads).map(|h| format!("entropy_{h}")));
        cols.extend((0..n_heads).map(|h| format!("entropy_active_{h}")));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cells = vec![
            self.epoch.to_string(),
            self.train_loss.to_string(),
            self.temperature.to_string(),
            self.resets_so_far.to_string(),
        ];
        cells.extend(self.train_acc.iter().map(|v| v.to_string()));
        cells.extend(self.head_entropy.iter().map(|v| v.to_string()));
        cells.extend(self.entropy_active.iter().map(|v| v.to_string()));
        cells.join(",")
    }
}
