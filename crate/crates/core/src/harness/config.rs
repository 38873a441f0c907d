use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, HarnessError, Result};
use crate::agents::{AssignmentMode, ChannelMode, InputEncoder, SenderConfig};
use crate::env::Domain;
use crate::training::TrainingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IteratedLearning,
    Lazimpa,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::IteratedLearning => "iterated_learning",
            Method::Lazimpa => "lazimpa",
        })
    }
}

/// One experimental condition plus the seeds to run it on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub domain: Domain,
    /// Scenes file for `external` domains.
    pub dataset: Option<PathBuf>,
    pub n_scenes: usize,
    pub n_agents: usize,
    pub k: usize,
    pub v: usize,
    pub channel: ChannelMode,
    pub assignment: AssignmentMode,
    pub input: InputEncoder,
    pub conv_hidden: usize,
    pub method: Method,
    pub compositional_threshold: f64,
    pub seeds: Vec<u64>,
    pub training: TrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "spring_mass".into(),
            domain: Domain::SpringMass,
            dataset: None,
            n_scenes: 300,
            n_agents: 2,
            k: 2,
            v: 5,
            channel: ChannelMode::Discrete,
            assignment: AssignmentMode::Sequential,
            input: InputEncoder::FrozenMlp,
            conv_hidden: 64,
            method: Method::IteratedLearning,
            compositional_threshold: 0.4,
            seeds: (0..10).collect(),
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct OracleKey<'a> {
    domain: Domain,
    dataset: &'a Option<PathBuf>,
    n_scenes: usize,
    input: InputEncoder,
    conv_hidden: usize,
    oracle_epochs: usize,
    oracle_lr: f64,
    batch_size: usize,
    grad_clip: f64,
}

fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("name {:?} must be non-empty [A-Za-z0-9_-]", self.name));
        }
        if (self.domain == Domain::External) != self.dataset.is_some() {
            return bad("a dataset file is required exactly when domain = \"external\"".into());
        }
        if self.n_scenes == 0 {
            return bad("n_scenes must be positive".into());
        }
        if self.method == Method::Lazimpa && self.channel != ChannelMode::Discrete {
            return bad("the lazimpa baseline needs a discrete channel".into());
        }
        if !(self.compositional_threshold.is_finite()) {
            return bad("compositional_threshold must be finite".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed required".into());
        }
        self.sender_config(1).validate()?;
        self.training.validate()?;
        Ok(())
    }

    pub fn sender_config(&self, input_width: usize) -> SenderConfig {
        SenderConfig {
            n_agents: self.n_agents,
            k: self.k,
            v: self.v,
            channel: self.channel,
            conv_hidden: self.conv_hidden,
            input_width,
        }
    }

    /// Hash of everything that affects a single run; name and seed list
    /// are excluded.
    pub fn condition_hash(&self) -> String {
        let mut c = self.clone();
        c.name = String::new();
        c.seeds = Vec::new();
        digest(&c.to_toml())
    }

    /// Hash of the settings the pretrained oracle depends on, so conditions
    /// differing only in the sender share an oracle.
    pub fn oracle_hash(&self) -> String {
        let key = OracleKey {
            domain: self.domain,
            dataset: &self.dataset,
            n_scenes: self.n_scenes,
            input: self.input,
            conv_hidden: self.conv_hidden,
            oracle_epochs: self.training.oracle_epochs,
            oracle_lr: self.training.oracle_lr,
            batch_size: self.training.batch_size,
            grad_clip: self.training.grad_clip,
        };
        digest(&toml::to_string(&key).expect("key serializes"))
    }

    /// Directory name inside the store.
    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.name, self.condition_hash())
    }
}
