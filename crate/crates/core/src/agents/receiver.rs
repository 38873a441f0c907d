use rand::Rng;

use super::{AgentError, EncodedScenes, Init, Linear, Result, TemporalEncoder, REPR_DIM};
use crate::tensor::{Bound, Graph, ParamStore, Tensor, Var};

const TRUNK1: usize = 128;
const TRUNK2: usize = 64;

/// Rows `a_rows` of `message` next to rows `b_rows`: `[pairs, 2 * width]`.
pub fn pair_input(g: &mut Graph, message: Var, a_rows: &[usize], b_rows: &[usize]) -> Var {
    let a = g.gather_rows(message, a_rows);
    let b = g.gather_rows(message, b_rows);
    g.concat_cols(&[a, b])
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy)]
struct Trunk {
    l1: Linear,
    l2: Linear,
}

impl Trunk {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, input: usize, rng: &mut R) -> Self {
        Trunk {
            l1: Linear::new(store, "trunk1", input, TRUNK1, Init::He, rng),
            l2: Linear::new(store, "trunk2", TRUNK1, TRUNK2, Init::He, rng),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let h = self.l1.forward(g, p, x);
        let h = g.relu(h);
        let h = self.l2.forward(g, p, h);
        g.relu(h)
    }

    fn reinit<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        self.l1.reinit(store, Init::He, rng);
        self.l2.reinit(store, Init::He, rng);
    }
}

/// MLP trunk `width -> 128 -> 64` with one logit per compared property.
#[derive(Debug, Clone)]
pub struct Receiver {
    pub store: ParamStore,
    pub input_width: usize,
    pub n_outputs: usize,
    trunk: Trunk,
    head: Linear,
}

impl Receiver {
    pub fn new<R: Rng + ?Sized>(input_width: usize, n_outputs: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let trunk = Trunk::new(&mut store, input_width, rng);
        let head = Linear::new(&mut store, "head", TRUNK2, n_outputs, Init::Lecun, rng);
        Receiver { store, input_width, n_outputs, trunk, head }
    }

    /// Fresh draw of every parameter from the construction initializer.
    pub fn reinit<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.trunk.reinit(&mut self.store, rng);
        self.head.reinit(&mut self.store, Init::Lecun, rng);
    }

    /// Logits `[rows, n_outputs]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let w = g.value(x).cols();
        if w != self.input_width {
            return Err(AgentError::WidthMismatch { expected: self.input_width, got: w });
        }
        let h = self.trunk.forward(g, p, x);
        Ok(self.head.forward(g, p, h))
    }

    /// Sigmoid probabilities for each input row.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let x = g.constant(Tensor::from_rows(rows)?);
        let z = self.forward(&mut g, &p, x)?;
        Ok(g.value(z).data().chunks(self.n_outputs).map(|r| r.iter().map(|v| sigmoid(*v)).collect()).collect())
    }
}

/// Prefix-predicting listener: prediction set `j` sees only the first `j + 1`
/// positions of every agent's message, on both sides of the pair.
#[derive(Debug, Clone)]
pub struct ImpatientReceiver {
    pub store: ParamStore,
    pub n_agents: usize,
    pub k: usize,
    pub v: usize,
    pub n_outputs: usize,
    trunk: Trunk,
    heads: Vec<Linear>,
}

impl ImpatientReceiver {
    pub fn new<R: Rng + ?Sized>(n_agents: usize, k: usize, v: usize, n_outputs: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let trunk = Trunk::new(&mut store, 2 * n_agents * k * v, rng);
        let heads = (0..k)
            .map(|j| Linear::new(&mut store, &format!("head{j}"), TRUNK2, n_outputs, Init::Lecun, rng))
            .collect();
        ImpatientReceiver { store, n_agents, k, v, n_outputs, trunk, heads }
    }

    pub fn input_width(&self) -> usize {
        2 * self.n_agents * self.k * self.v
    }

    fn prefix_mask(&self, j: usize) -> Vec<f64> {
        (0..self.input_width()).map(|c| if (c / self.v) % self.k <= j { 1.0 } else { 0.0 }).collect()
    }

    /// One logit tensor per prefix length, shortest first.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Vec<Var>> {
        let (rows, w) = (g.value(x).rows(), g.value(x).cols());
        if w != self.input_width() {
            return Err(AgentError::WidthMismatch { expected: self.input_width(), got: w });
        }
        let mut out = Vec::with_capacity(self.k);
        for (j, head) in self.heads.iter().enumerate() {
            let mask: Vec<f64> = self.prefix_mask(j).iter().cycle().take(rows * w).copied().collect();
            let xj = g.mul_const(x, mask);
            let h = self.trunk.forward(g, p, xj);
            out.push(head.forward(g, p, h));
        }
        Ok(out)
    }
}

/// Communication-free comparator: the temporal encoder over all frames of
/// both scenes, then `256 -> 128 -> 64 -> P`.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub store: ParamStore,
    pub encoder: TemporalEncoder,
    pub n_outputs: usize,
    trunk: Trunk,
    head: Linear,
}

impl Oracle {
    pub fn new<R: Rng + ?Sized>(input_width: usize, conv_hidden: usize, n_outputs: usize, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let encoder = TemporalEncoder::new(&mut store, "encoder", input_width, conv_hidden, rng);
        let trunk = Trunk::new(&mut store, 2 * REPR_DIM, rng);
        let head = Linear::new(&mut store, "head", TRUNK2, n_outputs, Init::Lecun, rng);
        Oracle { store, encoder, n_outputs, trunk, head }
    }

    /// Logits for pairs `(ids[a_rows[i]], ids[b_rows[i]])`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        scenes: &EncodedScenes,
        ids: &[usize],
        a_rows: &[usize],
        b_rows: &[usize],
    ) -> Result<Var> {
        let frames: Vec<usize> = (0..scenes.frames).collect();
        let h = self.encoder.encode(g, p, scenes, ids, &frames)?;
        let x = pair_input(g, h, a_rows, b_rows);
        let t = self.trunk.forward(g, p, x);
        Ok(self.head.forward(g, p, t))
    }

    /// Probability that A is higher, per property, for each `(a, b)` pair.
    pub fn compare(&self, scenes: &EncodedScenes, pairs: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
        let mut ids: Vec<usize> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
        ids.sort_unstable();
        ids.dedup();
        let row = |s: usize| ids.binary_search(&s).expect("id present");
        let a_rows: Vec<usize> = pairs.iter().map(|p| row(p.0)).collect();
        let b_rows: Vec<usize> = pairs.iter().map(|p| row(p.1)).collect();
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let z = self.forward(&mut g, &p, scenes, &ids, &a_rows, &b_rows)?;
        Ok(g.value(z).data().chunks(self.n_outputs).map(|r| r.iter().map(|v| sigmoid(*v)).collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outputs_are_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = Receiver::new(20, 2, &mut rng);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| (0..20).map(|j| ((i * j) % 3) as f64).collect()).collect();
        for p in r.predict(&rows).unwrap().iter().flatten() {
            assert!(*p > 0.0 && *p < 1.0);
        }
    }

    #[test]
    fn zero_bundle_is_bias_driven() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = Receiver::new(20, 2, &mut rng);
        let out = r.predict(&[vec![0.0; 20]]).unwrap();
        // zero input and zero biases give logit 0
        assert_eq!(out[0], vec![0.5, 0.5]);
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = Receiver::new(20, 2, &mut rng);
        assert!(matches!(r.predict(&[vec![0.0; 10]]), Err(AgentError::WidthMismatch { expected: 20, got: 10 })));
    }

    #[test]
    fn reinit_changes_every_parameter() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Receiver::new(20, 2, &mut rng);
        // biases start at zero, so perturb them first
        for p in r.store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += 0.5);
        }
        let before: Vec<Vec<f64>> = r.store.iter().map(|p| p.value.data().to_vec()).collect();
        r.reinit(&mut rng);
        for (b, p) in before.iter().zip(r.store.iter()) {
            assert!(b.iter().zip(p.value.data()).all(|(x, y)| x != y), "{} unchanged", p.name);
        }
    }

    #[test]
    fn impatient_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = ImpatientReceiver::new(2, 2, 5, 2, &mut rng);
        assert_eq!(r.input_width(), 40);
        let m0 = r.prefix_mask(0);
        // first position of each agent on both sides
        let kept: Vec<usize> = (0..40).filter(|c| m0[*c] == 1.0).map(|c| c / 5).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        assert_eq!(kept, vec![0, 2, 4, 6]);
        assert!(r.prefix_mask(1).iter().all(|m| *m == 1.0));
        let mut g = Graph::new();
        let p = r.store.bind(&mut g);
        let x = g.constant(Tensor::zeros(&[3, 40]));
        assert_eq!(r.forward(&mut g, &p, x).unwrap().len(), 2);
    }
}
