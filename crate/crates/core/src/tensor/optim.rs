use super::{ParamStore, Result, TensorError};

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first, &self.second)
    }

    /// Drop all moment state, as if freshly constructed.
    pub fn reset(&mut self) {
        self.step = 0;
        self.first.clear();
        self.second.clear();
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if !store.grads_fresh() {
            let name = store.iter().find(|p| p.trainable).map_or("<empty>".to_string(), |p| p.name.clone());
            return Err(TensorError::MissingGradients(name));
        }
        if self.first.len() != store.len() {
            self.first = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if !p.trainable {
                continue;
            }
            let vals = p.value.data_mut();
            for i in 0..vals.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                vals[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        store.mark_consumed();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipReport {
    pub pre_norm: f64,
    pub post_norm: f64,
    pub scale: f64,
}

/// Rescale all trainable gradients so their joint L2 norm is at most `max_norm`.
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> ClipReport {
    let pre = store.grad_norm();
    let scale = if pre > max_norm && pre > 0.0 { max_norm / pre } else { 1.0 };
    if scale < 1.0 {
        for p in store.iter_mut().filter(|p| p.trainable) {
            p.grad.iter_mut().for_each(|g| *g *= scale);
        }
    }
    ClipReport {
        pre_norm: pre,
        post_norm: pre * scale,
        scale,
    }
}
