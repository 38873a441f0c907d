//! Dense f64 tensors with a small reverse-mode autodiff tape.
//!
//! Parameters live in a [`ParamStore`] owned by each model. A training step
//! binds the stores it needs onto a fresh [`Graph`], builds the loss, runs
//! [`Graph::backward`] and pulls gradients back into the stores.

mod gemm;
mod graph;
mod gumbel;
mod optim;

pub use gemm::{gemm, Transpose};
pub use graph::{argmax, Grads, Graph, Var, LN_FLOOR};
pub use gumbel::{gumbel_noise, gumbel_softmax, gumbel_softmax_sample, ChannelSample};
pub use optim::{clip_gradients, Adam, ClipReport};

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} does not hold {len} values")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient flowing into `{op}`")]
    NonFiniteGrad { op: &'static str },
    #[error("optimizer step without fresh gradients for `{0}`")]
    MissingGradients(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::ShapeMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Panicking constructor for internal use where the shape is known good.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::InvalidArgument("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    /// He-style normal initialisation, stddev `sqrt(2 / fan_in)`.
    pub fn he_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite stddev");
        let n = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(rng)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D view: all leading dims folded together.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.data.len() / self.cols().max(1),
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

/// Named parameters of one model plus their gradient buffers.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    grads_fresh: bool,
}

/// Graph handles for every parameter of a store, in store order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Put every parameter on the graph; frozen ones become constants.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if p.trainable {
                    g.leaf(p.value.clone())
                } else {
                    g.constant(p.value.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Copy gradients for this store out of a backward pass. Trainable
    /// parameters the loss never reached get zero gradients.
    pub fn collect_grads(&mut self, grads: &Grads, bound: &Bound) {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            match grads.get(*v) {
                Some(gr) if p.trainable => p.grad.copy_from_slice(gr),
                _ => p.grad.iter_mut().for_each(|g| *g = 0.0),
            }
        }
        self.grads_fresh = true;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.grads_fresh = false;
    }

    pub fn grads_fresh(&self) -> bool {
        self.grads_fresh
    }

    pub(crate) fn mark_consumed(&mut self) {
        self.grads_fresh = false;
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Bit-level fingerprint of every value; used to prove immutability.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over names and value bits
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for p in &self.params {
            eat(p.name.as_bytes());
            for v in p.value.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Overwrite values of parameters whose names match `other` after
    /// applying `rename`. Returns how many were copied.
    pub fn copy_matching(&mut self, other: &ParamStore, rename: impl Fn(&str) -> Option<String>) -> usize {
        let mut n = 0;
        for src in &other.params {
            let Some(target) = rename(&src.name) else { continue };
            if let Some(id) = self.find(&target) {
                let dst = &mut self.params[id.0];
                if dst.value.shape() == src.value.shape() {
                    dst.value = src.value.clone();
                    n += 1;
                }
            }
        }
        n
    }
}
