use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, EncodedScenes, FrameAssignment, Init, Linear, Result, TemporalEncoder, REPR_DIM};
use crate::tensor::{argmax, gumbel_softmax, Bound, ChannelSample, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Discrete,
    /// `tanh` of the head pre-activations; same width as the discrete channel.
    Continuous,
}

impl std::str::FromStr for ChannelMode {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(ChannelMode::Discrete),
            "continuous" => Ok(ChannelMode::Continuous),
            _ => Err(AgentError::Config(format!("unknown channel mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChannelMode::Discrete => "discrete",
            ChannelMode::Continuous => "continuous",
        })
    }
}

pub fn continuous_channel(pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|v| v.tanh()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderConfig {
    pub n_agents: usize,
    pub k: usize,
    pub v: usize,
    pub channel: ChannelMode,
    /// Channels of the first convolution.
    pub conv_hidden: usize,
    pub input_width: usize,
}

impl SenderConfig {
    pub fn positions(&self) -> usize {
        self.n_agents * self.k
    }

    /// One-hot width of one scene's full bundle.
    pub fn message_width(&self) -> usize {
        self.n_agents * self.k * self.v
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.k == 0 {
            return Err(AgentError::Config("need at least one agent and one position".into()));
        }
        if self.v < 2 {
            return Err(AgentError::Config(format!("vocabulary {} below 2", self.v)));
        }
        if self.conv_hidden == 0 || self.input_width == 0 {
            return Err(AgentError::Config("zero-width encoder".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Emission {
    Train { temperature: f64, sample: ChannelSample },
    /// Noise-free argmax (discrete) or plain `tanh` (continuous).
    Eval,
}

/// Graph outputs of one sender pass.
#[derive(Debug, Clone)]
pub struct SenderOutput {
    /// `[batch, N*K*V]`, agent-major then position.
    pub message: Var,
    /// Per agent `[batch, K*V]` head pre-activations.
    pub logits: Vec<Var>,
}

/// One scene's messages from every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBundle {
    pub n_agents: usize,
    pub k: usize,
    pub v: usize,
    pub values: Vec<f64>,
}

impl MessageBundle {
    pub fn from_symbols(n_agents: usize, k: usize, v: usize, symbols: &[usize]) -> Self {
        assert_eq!(symbols.len(), n_agents * k, "symbol count");
        let mut values = vec![0.0; n_agents * k * v];
        for (pos, &s) in symbols.iter().enumerate() {
            values[pos * v + s] = 1.0;
        }
        MessageBundle { n_agents, k, v, values }
    }

    pub fn positions(&self) -> usize {
        self.n_agents * self.k
    }

    pub fn position(&self, pos: usize) -> &[f64] {
        &self.values[pos * self.v..(pos + 1) * self.v]
    }

    /// Argmax symbol per position.
    pub fn symbols(&self) -> Vec<usize> {
        (0..self.positions()).map(|p| argmax(self.position(p))).collect()
    }

    pub fn zero_position(&mut self, pos: usize) {
        self.values[pos * self.v..(pos + 1) * self.v].iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn is_zeroed(&self, pos: usize) -> bool {
        self.position(pos).iter().all(|x| *x == 0.0)
    }
}

/// `N` agents, each a temporal encoder over its frame block plus `K` heads.
#[derive(Debug, Clone)]
pub struct Sender {
    pub cfg: SenderConfig,
    pub store: ParamStore,
    pub assignment: FrameAssignment,
    encoders: Vec<TemporalEncoder>,
    heads: Vec<Linear>,
}

impl Sender {
    pub fn new<R: Rng + ?Sized>(cfg: SenderConfig, assignment: FrameAssignment, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if assignment.n_agents() != cfg.n_agents {
            return Err(AgentError::Config(format!(
                "assignment has {} blocks for {} agents",
                assignment.n_agents(),
                cfg.n_agents
            )));
        }
        if let Some(a) = assignment.blocks.iter().position(|b| b.is_empty()) {
            return Err(AgentError::EmptyAssignment(a));
        }
        let mut store = ParamStore::new();
        let mut encoders = Vec::new();
        let mut heads = Vec::new();
        for a in 0..cfg.n_agents {
            encoders.push(TemporalEncoder::new(&mut store, &format!("agent{a}.encoder"), cfg.input_width, cfg.conv_hidden, rng));
            heads.push(Linear::new(&mut store, &format!("agent{a}.heads"), REPR_DIM, cfg.k * cfg.v, Init::Lecun, rng));
        }
        Ok(Sender { cfg, store, assignment, encoders, heads })
    }

    /// Copy `encoder.*` parameters of `source` into every agent's encoder.
    pub fn load_encoder(&mut self, source: &ParamStore) -> Result<()> {
        for a in 0..self.cfg.n_agents {
            let copied = self
                .store
                .copy_matching(source, |n| n.strip_prefix("encoder.").map(|rest| format!("agent{a}.encoder.{rest}")));
            if copied != 4 {
                return Err(AgentError::Config(format!("encoder transfer matched {copied} of 4 tensors")));
            }
        }
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        scenes: &EncodedScenes,
        ids: &[usize],
        emission: Emission,
        rng: &mut R,
    ) -> Result<SenderOutput> {
        let (k, v) = (self.cfg.k, self.cfg.v);
        let mut parts = Vec::with_capacity(self.cfg.positions());
        let mut logits = Vec::with_capacity(self.cfg.n_agents);
        for (a, (enc, head)) in self.encoders.iter().zip(&self.heads).enumerate() {
            let h = enc
                .encode(g, p, scenes, ids, self.assignment.agent(a))
                .map_err(|e| match e {
                    AgentError::EmptyAssignment(_) => AgentError::EmptyAssignment(a),
                    other => other,
                })?;
            let z = head.forward(g, p, h);
            logits.push(z);
            match (self.cfg.channel, emission) {
                (ChannelMode::Continuous, _) => parts.push(g.tanh(z)),
                (ChannelMode::Discrete, Emission::Eval) => {
                    let zt = g.value(z);
                    let mut onehot = vec![0.0; zt.len()];
                    for (row, out) in zt.data().chunks(v).zip(onehot.chunks_mut(v)) {
                        out[argmax(row)] = 1.0;
                    }
                    let shape = zt.shape().to_vec();
                    parts.push(g.constant(Tensor::new(shape, onehot)?));
                }
                (ChannelMode::Discrete, Emission::Train { temperature, sample }) => {
                    for pos in 0..k {
                        let zk = g.slice_cols(z, pos * v, v);
                        parts.push(gumbel_softmax(g, zk, temperature, sample, rng)?);
                    }
                }
            }
        }
        let message = if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts) };
        Ok(SenderOutput { message, logits })
    }

    /// Deterministic eval-mode bundles for `ids`, computed in chunks.
    pub fn eval_messages(&self, scenes: &EncodedScenes, ids: &[usize]) -> Result<Vec<MessageBundle>> {
        let mut out = Vec::with_capacity(ids.len());
        // eval emission never draws
        let mut unused = crate::seed::stream(0, "unused");
        for chunk in ids.chunks(256) {
            let mut g = Graph::new();
            let p = self.store.bind(&mut g);
            let o = self.forward(&mut g, &p, scenes, chunk, Emission::Eval, &mut unused)?;
            let width = self.cfg.message_width();
            for row in g.value(o.message).data().chunks(width) {
                out.push(MessageBundle {
                    n_agents: self.cfg.n_agents,
                    k: self.cfg.k,
                    v: self.cfg.v,
                    values: row.to_vec(),
                });
            }
        }
        Ok(out)
    }

    /// Per-position eval symbols for `ids`, `N*K` per scene.
    pub fn eval_symbols(&self, scenes: &EncodedScenes, ids: &[usize]) -> Result<Vec<Vec<usize>>> {
        Ok(self.eval_messages(scenes, ids)?.iter().map(|b| b.symbols()).collect())
    }
}
