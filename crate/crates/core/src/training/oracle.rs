use super::data::{pair_rows, score_predictions, Accuracy, Prepared};
use super::{Result, TrainError, TrainingConfig};
use crate::agents::Oracle;
use crate::seed;
use crate::tensor::{clip_gradients, Adam, Graph, TensorError, Var};

/// Summed per-property BCE averaged over pairs. `weights` scales each
/// property's term; empty means 1 for all.
pub(crate) fn pair_bce(g: &mut Graph, logits: Var, targets: &[f64], weights: &[f64]) -> Var {
    let cols = g.value(logits).cols();
    let rows = g.value(logits).rows();
    let mut bce = g.bce_with_logits(logits, targets.to_vec());
    if !weights.is_empty() {
        let w: Vec<f64> = weights.iter().cycle().take(rows * cols).copied().collect();
        bce = g.mul_const(bce, w);
    }
    let s = g.sum(bce);
    g.scale(s, 1.0 / rows.max(1) as f64)
}

/// Fraction of correct sign decisions per column of `logits`.
pub(crate) fn logit_hits(logits: &[f64], targets: &[f64], cols: usize) -> Vec<f64> {
    let mut hits = vec![0.0; cols];
    for (i, (z, t)) in logits.iter().zip(targets).enumerate() {
        if (*z > 0.0) == (*t > 0.5) {
            hits[i % cols] += 1.0;
        }
    }
    hits
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub oracle: Oracle,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub holdout: Accuracy,
}

/// Train the communication-free comparator on training-split pairs.
pub fn pretrain_oracle(prepared: &Prepared, cfg: &TrainingConfig, conv_hidden: usize, seed: u64) -> Result<OracleOutcome> {
    cfg.validate()?;
    let np = prepared.n_props();
    let mut oracle = Oracle::new(prepared.encoded.width, conv_hidden, np, &mut seed::stream(seed, "oracle"));
    let mut adam = Adam::new(cfg.oracle_lr);
    let mut pair_rng = seed::stream(seed, "oracle-pairs");
    let n_pairs = 2 * prepared.split.train_ids.len();
    let mut epoch_losses = Vec::with_capacity(cfg.oracle_epochs);
    for epoch in 0..cfg.oracle_epochs {
        let pairs = prepared.sample_train_pairs(n_pairs, &mut pair_rng)?;
        let mut total = 0.0;
        let mut batches = 0;
        for batch in pairs.chunks(cfg.batch_size) {
            let plan = pair_rows(batch);
            let mut g = Graph::new();
            let p = oracle.store.bind(&mut g);
            let z = oracle.forward(&mut g, &p, &prepared.encoded, &plan.ids, &plan.a_rows, &plan.b_rows)?;
            let loss = pair_bce(&mut g, z, &plan.targets, &[]);
            let diverged = |e: TensorError| TrainError::OracleDiverged { seed, epoch, detail: e.to_string() };
            let value = g.scalar(loss).map_err(diverged)?;
            let grads = g.backward(loss).map_err(diverged)?;
            oracle.store.collect_grads(&grads, &p);
            clip_gradients(&mut oracle.store, cfg.grad_clip);
            adam.step(&mut oracle.store)?;
            total += value;
            batches += 1;
        }
        epoch_losses.push(total / batches.max(1) as f64);
    }
    let test = prepared.test_pairs();
    let mut probs = Vec::with_capacity(test.len());
    for chunk in test.chunks(4096) {
        let ab: Vec<(usize, usize)> = chunk.iter().map(|p| (p.a, p.b)).collect();
        probs.extend(oracle.compare(&prepared.encoded, &ab)?);
    }
    let holdout = score_predictions(&test, &probs);
    Ok(OracleOutcome { oracle, epoch_losses, holdout })
}
