use serde::{Deserialize, Serialize};

use super::Result;
use crate::agents::{Receiver, Sender};
use crate::env::{all_pairs, make_cross_pairs, DatasetSplit, Scene};
use crate::seed;
use crate::tensor::{clip_gradients, Adam, Graph, Tensor};
use crate::training::{score_predictions, scene_messages, Prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig { epochs: 200, lr: 3e-3, batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub task: String,
    pub holdout_accuracy: f64,
    pub train_losses: Vec<f64>,
    /// Sender parameter checksum, identical before and after.
    pub sender_checksum: u64,
}

/// Train a fresh receiver on "property `pa` of A exceeds property `pb` of B"
/// over fixed per-scene messages.
pub fn transfer_on_messages(
    messages: &[Vec<f64>],
    scenes: &[Scene],
    split: &DatasetSplit,
    pa: usize,
    pb: usize,
    cfg: &TransferConfig,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let width = 2 * messages[0].len();
    let mut receiver = Receiver::new(width, 1, &mut seed::stream(seed, "transfer-receiver"));
    let mut adam = Adam::new(cfg.lr);
    let mut rng = seed::stream(seed, "transfer-pairs");
    let n_pairs = 2 * split.train_ids.len();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let pairs = make_cross_pairs(&split.train_ids, scenes, pa, pb, n_pairs, &mut rng)?;
        let mut total = 0.0;
        let mut steps = 0;
        for batch in pairs.chunks(cfg.batch_size) {
            let rows: Vec<Vec<f64>> =
                batch.iter().map(|p| messages[p.a].iter().chain(&messages[p.b]).copied().collect()).collect();
            let targets: Vec<f64> = batch.iter().flat_map(|p| p.targets()).collect();
            let mut g = Graph::new();
            let p = receiver.store.bind(&mut g);
            let x = g.constant(Tensor::from_rows(&rows)?);
            let z = receiver.forward(&mut g, &p, x)?;
            let bce = g.bce_with_logits(z, targets);
            let loss = g.mean(bce);
            total += g.scalar(loss)?;
            steps += 1;
            let grads = g.backward(loss)?;
            receiver.store.collect_grads(&grads, &p);
            clip_gradients(&mut receiver.store, 1.0);
            adam.step(&mut receiver.store)?;
        }
        losses.push(total / steps.max(1) as f64);
    }
    let test = all_pairs(&split.test_ids, scenes, &[(pa, pb)]);
    let mut probs = Vec::with_capacity(test.len());
    for chunk in test.chunks(4096) {
        let rows: Vec<Vec<f64>> =
            chunk.iter().map(|p| messages[p.a].iter().chain(&messages[p.b]).copied().collect()).collect();
        probs.extend(receiver.predict(&rows)?);
    }
    Ok((score_predictions(&test, &probs).both, losses))
}

/// Cross-property comparison learned on top of a frozen sender.
pub fn cross_property_transfer(
    sender: &Sender,
    prepared: &Prepared,
    pa: usize,
    pb: usize,
    cfg: &TransferConfig,
    seed: u64,
) -> Result<TransferResult> {
    let before = sender.store.checksum();
    let messages = scene_messages(sender, prepared)?;
    let (holdout_accuracy, train_losses) =
        transfer_on_messages(&messages, &prepared.dataset.scenes, &prepared.split, pa, pb, cfg, seed)?;
    assert_eq!(before, sender.store.checksum(), "frozen sender changed");
    let names = prepared.dataset.grid.names();
    Ok(TransferResult {
        task: format!("{}(A) > {}(B)", names[pa], names[pb]),
        holdout_accuracy,
        train_losses,
        sender_checksum: before,
    })
}
