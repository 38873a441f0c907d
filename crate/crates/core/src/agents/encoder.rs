use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{init_tensor, AgentError, Init, Result};
use crate::env::{Scene, Standardizer};
use crate::tensor::{gemm, Bound, Graph, ParamId, ParamStore, Tensor, Transpose, Var};

/// Per-frame width produced by the frozen encoder.
pub const FROZEN_WIDTH: usize = 384;
/// Width of the scene representation `h`.
pub const REPR_DIM: usize = 128;

/// Fixed random MLP `D -> 384 -> ReLU -> 384` applied to every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenRandomEncoder {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl FrozenRandomEncoder {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        FrozenRandomEncoder {
            w1: init_tensor(&[input_dim, FROZEN_WIDTH], input_dim, Init::He, rng),
            b1: Tensor::zeros(&[FROZEN_WIDTH]),
            w2: init_tensor(&[FROZEN_WIDTH, FROZEN_WIDTH], FROZEN_WIDTH, Init::He, rng),
            b2: Tensor::zeros(&[FROZEN_WIDTH]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    /// `rows x D` frames to `rows x 384` features.
    pub fn encode(&self, frames: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        let rows = frames.len() / d;
        let mut hidden = vec![0.0; rows * FROZEN_WIDTH];
        for r in hidden.chunks_mut(FROZEN_WIDTH) {
            r.copy_from_slice(self.b1.data());
        }
        gemm(rows, d, FROZEN_WIDTH, 1.0, frames, Transpose::No, self.w1.data(), Transpose::No, 1.0, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut out = vec![0.0; rows * FROZEN_WIDTH];
        for r in out.chunks_mut(FROZEN_WIDTH) {
            r.copy_from_slice(self.b2.data());
        }
        gemm(rows, FROZEN_WIDTH, FROZEN_WIDTH, 1.0, &hidden, Transpose::No, self.w2.data(), Transpose::No, 1.0, &mut out);
        out
    }

    pub fn checksum(&self) -> u64 {
        let mut store = ParamStore::new();
        for (n, t) in [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)] {
            store.add(n, t.clone(), false);
        }
        store.checksum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoder {
    /// Standardize, then the frozen random MLP.
    FrozenMlp,
    /// Standardize only; used for externally supplied features.
    Identity,
}

impl std::str::FromStr for InputEncoder {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen_mlp" => Ok(InputEncoder::FrozenMlp),
            "identity" => Ok(InputEncoder::Identity),
            _ => Err(AgentError::Config(format!("unknown input encoder {s:?}"))),
        }
    }
}

impl std::fmt::Display for InputEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputEncoder::FrozenMlp => "frozen_mlp",
            InputEncoder::Identity => "identity",
        })
    }
}

/// Per-frame features of every scene after the frozen front end.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedScenes {
    pub frames: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl EncodedScenes {
    pub fn build(scenes: &[Scene], standardizer: &Standardizer, frozen: Option<&FrozenRandomEncoder>) -> Self {
        let frames = scenes.first().map_or(0, |s| s.frames);
        let mut data = Vec::new();
        for s in scenes {
            let z = standardizer.apply(&s.features);
            match frozen {
                Some(enc) => data.extend(enc.encode(&z)),
                None => data.extend(z),
            }
        }
        let width = frozen.map_or_else(|| scenes.first().map_or(0, |s| s.dims), |_| FROZEN_WIDTH);
        EncodedScenes { frames, width, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.frames * self.width).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, scene: usize, t: usize) -> &[f64] {
        let o = (scene * self.frames + t) * self.width;
        &self.data[o..o + self.width]
    }

    /// `[ids.len() * frames.len(), width]`, scene-major.
    pub fn gather(&self, ids: &[usize], frames: &[usize]) -> Tensor {
        let mut out = Vec::with_capacity(ids.len() * frames.len() * self.width);
        for &i in ids {
            for &t in frames {
                out.extend_from_slice(self.frame(i, t));
            }
        }
        Tensor::new(vec![ids.len() * frames.len(), self.width], out).expect("gather shape")
    }
}

/// Two same-padded 1-D convolutions (kernel 3) with ReLU, then mean pooling
/// over time to a 128-dim representation.
#[derive(Debug, Clone, Copy)]
pub struct TemporalEncoder {
    pub conv1_w: ParamId,
    pub conv1_b: ParamId,
    pub conv2_w: ParamId,
    pub conv2_b: ParamId,
    pub input_width: usize,
    pub hidden: usize,
}

const KERNEL: usize = 3;

impl TemporalEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, input_width: usize, hidden: usize, rng: &mut R) -> Self {
        let mut add = |name: &str, shape: &[usize], fan_in: usize, rng: &mut R| {
            let t = if fan_in == 0 { Tensor::zeros(shape) } else { init_tensor(shape, fan_in, Init::He, rng) };
            store.add(format!("{prefix}.{name}"), t, true)
        };
        let conv1_w = add("conv1.w", &[KERNEL * input_width, hidden], KERNEL * input_width, rng);
        let conv1_b = add("conv1.b", &[hidden], 0, rng);
        let conv2_w = add("conv2.w", &[KERNEL * hidden, REPR_DIM], KERNEL * hidden, rng);
        let conv2_b = add("conv2.b", &[REPR_DIM], 0, rng);
        TemporalEncoder { conv1_w, conv1_b, conv2_w, conv2_b, input_width, hidden }
    }

    /// `input [batch * seq_len, width]` to `h [batch, 128]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, input: Var, seq_len: usize) -> Var {
        let x = g.conv1d(input, p.var(self.conv1_w), p.var(self.conv1_b), seq_len, KERNEL);
        let x = g.relu(x);
        let x = g.conv1d(x, p.var(self.conv2_w), p.var(self.conv2_b), seq_len, KERNEL);
        let x = g.relu(x);
        g.segment_mean(x, seq_len)
    }

    /// Encode `ids` using `frames` of each scene.
    pub fn encode(&self, g: &mut Graph, p: &Bound, scenes: &EncodedScenes, ids: &[usize], frames: &[usize]) -> Result<Var> {
        if frames.is_empty() {
            return Err(AgentError::EmptyAssignment(0));
        }
        if let Some(&f) = frames.iter().find(|f| **f >= scenes.frames) {
            return Err(AgentError::FrameOutOfRange { frame: f, frames: scenes.frames });
        }
        if scenes.width != self.input_width {
            return Err(AgentError::WidthMismatch { expected: self.input_width, got: scenes.width });
        }
        let x = g.constant(scenes.gather(ids, frames));
        Ok(self.forward(g, p, x, frames.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Dataset, Domain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (EncodedScenes, ParamStore, TemporalEncoder) {
        let ds = Dataset::generate(Domain::Ramp, 10, 0).unwrap();
        let ids: Vec<usize> = (0..10).collect();
        let st = Standardizer::fit(&ds.scenes, &ids);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frozen = FrozenRandomEncoder::new(4, &mut rng);
        let enc = EncodedScenes::build(&ds.scenes, &st, Some(&frozen));
        let mut store = ParamStore::new();
        let te = TemporalEncoder::new(&mut store, "enc", FROZEN_WIDTH, 32, &mut rng);
        (enc, store, te)
    }

    fn h(enc: &EncodedScenes, store: &ParamStore, te: &TemporalEncoder, ids: &[usize], frames: &[usize]) -> Vec<f64> {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let v = te.encode(&mut g, &p, enc, ids, frames).unwrap();
        g.value(v).data().to_vec()
    }

    #[test]
    fn representation_width_is_fixed() {
        let (enc, store, te) = setup();
        assert_eq!(h(&enc, &store, &te, &[0], &[0, 1]).len(), REPR_DIM);
        assert_eq!(h(&enc, &store, &te, &[0], &(0..8).collect::<Vec<_>>()).len(), REPR_DIM);
    }

    #[test]
    fn depends_only_on_assigned_frames() {
        let (mut enc, store, te) = setup();
        let before = h(&enc, &store, &te, &[3], &[2, 3]);
        // scramble every other frame of scene 3
        for t in [0, 1, 4, 5, 6, 7] {
            let o = (3 * enc.frames + t) * enc.width;
            enc.data[o..o + enc.width].iter_mut().for_each(|v| *v = -*v * 3.0 + 1.0);
        }
        assert_eq!(before, h(&enc, &store, &te, &[3], &[2, 3]));
    }

    #[test]
    fn identical_scenes_identical_h() {
        let (enc, store, te) = setup();
        let both = h(&enc, &store, &te, &[5, 5], &[0, 1, 2]);
        assert_eq!(both[..REPR_DIM], both[REPR_DIM..]);
    }

    #[test]
    fn empty_assignment_rejected() {
        let (enc, store, te) = setup();
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        assert!(te.encode(&mut g, &p, &enc, &[0], &[]).is_err());
        assert!(te.encode(&mut g, &p, &enc, &[0], &[9]).is_err());
    }

    #[test]
    fn frozen_encoder_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = FrozenRandomEncoder::new(3, &mut rng);
        let x = [0.3, -1.2, 0.7];
        let out = f.encode(&x);
        let hidden: Vec<f64> = (0..FROZEN_WIDTH)
            .map(|j| (0..3).map(|i| x[i] * f.w1.data()[i * FROZEN_WIDTH + j]).sum::<f64>().max(0.0))
            .collect();
        for j in [0, 17, 383] {
            let want: f64 = (0..FROZEN_WIDTH).map(|i| hidden[i] * f.w2.data()[i * FROZEN_WIDTH + j]).sum();
            assert!((out[j] - want).abs() < 1e-12);
        }
    }
}
