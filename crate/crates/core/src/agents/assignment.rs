use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    Sequential,
    Random,
    Full,
}

impl std::str::FromStr for AssignmentMode {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(AssignmentMode::Sequential),
            "random" => Ok(AssignmentMode::Random),
            "full" => Ok(AssignmentMode::Full),
            _ => Err(AgentError::Config(format!("unknown assignment mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for AssignmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AssignmentMode::Sequential => "sequential",
            AssignmentMode::Random => "random",
            AssignmentMode::Full => "full",
        })
    }
}

/// Which frames each agent observes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAssignment {
    pub mode: AssignmentMode,
    pub frames: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl FrameAssignment {
    pub fn n_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn agent(&self, a: usize) -> &[usize] {
        &self.blocks[a]
    }
}

/// Near-equal contiguous block sizes, larger blocks first: 8 frames over 3
/// agents gives 3, 3, 2.
fn block_sizes(n_agents: usize, frames: usize) -> Vec<usize> {
    let (q, r) = (frames / n_agents, frames % n_agents);
    (0..n_agents).map(|a| q + usize::from(a < r)).collect()
}

pub fn build_frame_assignment<R: Rng + ?Sized>(
    n_agents: usize,
    frames: usize,
    mode: AssignmentMode,
    rng: &mut R,
) -> Result<FrameAssignment> {
    if n_agents == 0 || n_agents > frames {
        return Err(AgentError::TooManyAgents { agents: n_agents, frames });
    }
    let blocks = match mode {
        AssignmentMode::Full => vec![(0..frames).collect(); n_agents],
        AssignmentMode::Sequential | AssignmentMode::Random => {
            let mut order: Vec<usize> = (0..frames).collect();
            if mode == AssignmentMode::Random {
                order.shuffle(rng);
            }
            let mut start = 0;
            block_sizes(n_agents, frames)
                .into_iter()
                .map(|len| {
                    let mut b = order[start..start + len].to_vec();
                    // temporal order inside a block keeps the convolution meaningful
                    b.sort_unstable();
                    start += len;
                    b
                })
                .collect()
        }
    };
    Ok(FrameAssignment { mode, frames, blocks })
}
