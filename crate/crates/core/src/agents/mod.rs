//! Encoders, senders, receivers, the oracle comparator and frame assignment.

mod assignment;
mod checkpoint;
mod encoder;
mod receiver;
mod sender;

pub use assignment::{build_frame_assignment, AssignmentMode, FrameAssignment};
pub use checkpoint::{decode_params, encode_params, Checkpoint};
pub use encoder::{EncodedScenes, FrozenRandomEncoder, InputEncoder, TemporalEncoder, FROZEN_WIDTH, REPR_DIM};
pub use receiver::{pair_input, ImpatientReceiver, Oracle, Receiver};
pub use sender::{continuous_channel, ChannelMode, Emission, MessageBundle, Sender, SenderConfig, SenderOutput};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::tensor::{Bound, Graph, ParamId, ParamStore, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("agent {0} has no frames assigned")]
    EmptyAssignment(usize),
    #[error("{agents} agents cannot split {frames} frames")]
    TooManyAgents { agents: usize, frames: usize },
    #[error("frame {frame} out of range for {frames}-frame scenes")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("input width {got} does not match expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, AgentError>;

/// Affine layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// stddev sqrt(2 / fan_in), for layers followed by ReLU.
    He,
    /// stddev sqrt(1 / fan_in), for output layers.
    Lecun,
}

pub(crate) fn init_tensor<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, init: Init, rng: &mut R) -> Tensor {
    match init {
        Init::He => Tensor::he_normal(shape, fan_in, rng),
        Init::Lecun => {
            let normal = Normal::new(0.0, (1.0 / fan_in.max(1) as f64).sqrt()).expect("finite stddev");
            let data = (0..shape.iter().product()).map(|_| normal.sample(rng)).collect();
            Tensor::new(shape.to_vec(), data).expect("shape matches")
        }
    }
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), init_tensor(&[fan_in, fan_out], fan_in, init, rng), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]), true);
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let h = g.matmul(x, p.var(self.w));
        g.add_row(h, p.var(self.b))
    }

    /// Redraw the weights in place and zero the bias.
    pub fn reinit<R: Rng + ?Sized>(&self, store: &mut ParamStore, init: Init, rng: &mut R) {
        *store.value_mut(self.w) = init_tensor(&[self.fan_in, self.fan_out], self.fan_in, init, rng);
        *store.value_mut(self.b) = Tensor::zeros(&[self.fan_out]);
    }
}
