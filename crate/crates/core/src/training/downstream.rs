use rand::seq::SliceRandom;

use super::{Result, TrainError};
use crate::agents::{Init, Linear};
use crate::env::DatasetSplit;
use crate::seed;
use crate::tensor::{clip_gradients, Adam, Graph, ParamStore, Tensor};

const HIDDEN: usize = 64;
const BATCH: usize = 32;
const LR: f64 = 1e-3;

/// Binary labels from a rank split at the median: the lower half gets 0,
/// the upper half 1, ties broken by scene index so the halves are exact.
pub fn median_labels(outcomes: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|a, b| outcomes[*a].total_cmp(&outcomes[*b]).then(a.cmp(b)));
    let mut labels = vec![0; outcomes.len()];
    for &i in &order[outcomes.len() / 2..] {
        labels[i] = 1;
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownstreamResult {
    pub input_width: usize,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    pub positive_fraction: f64,
}

fn accuracy(store: &ParamStore, layers: (&Linear, &Linear), messages: &[Vec<f64>], labels: &[usize], ids: &[usize]) -> Result<f64> {
    let rows: Vec<Vec<f64>> = ids.iter().map(|i| messages[*i].clone()).collect();
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let x = g.constant(Tensor::from_rows(&rows)?);
    let h = layers.0.forward(&mut g, &p, x);
    let h = g.relu(h);
    let z = layers.1.forward(&mut g, &p, h);
    let hits = g.value(z).data().iter().zip(ids).filter(|(z, i)| (**z > 0.0) == (labels[**i] == 1)).count();
    Ok(hits as f64 / ids.len().max(1) as f64)
}

/// Two-layer MLP on frozen messages, trained on the training split and
/// scored on the held-out cells.
pub fn train_downstream_predictor(
    messages: &[Vec<f64>],
    labels: &[usize],
    split: &DatasetSplit,
    epochs: usize,
    seed: u64,
) -> Result<DownstreamResult> {
    if messages.len() != labels.len() || messages.is_empty() {
        return Err(TrainError::Config(format!("{} messages for {} labels", messages.len(), labels.len())));
    }
    let width = messages[0].len();
    let mut rng = seed::stream(seed, "downstream");
    let mut store = ParamStore::new();
    let l1 = Linear::new(&mut store, "hidden", width, HIDDEN, Init::He, &mut rng);
    let l2 = Linear::new(&mut store, "out", HIDDEN, 1, Init::Lecun, &mut rng);
    let mut adam = Adam::new(LR);
    let mut order = split.train_ids.clone();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH) {
            let rows: Vec<Vec<f64>> = batch.iter().map(|i| messages[*i].clone()).collect();
            let targets: Vec<f64> = batch.iter().map(|i| labels[*i] as f64).collect();
            let mut g = Graph::new();
            let p = store.bind(&mut g);
            let x = g.constant(Tensor::from_rows(&rows)?);
            let h = l1.forward(&mut g, &p, x);
            let h = g.relu(h);
            let z = l2.forward(&mut g, &p, h);
            let bce = g.bce_with_logits(z, targets);
            let loss = g.mean(bce);
            let grads = g.backward(loss)?;
            store.collect_grads(&grads, &p);
            clip_gradients(&mut store, 1.0);
            adam.step(&mut store)?;
        }
    }
    Ok(DownstreamResult {
        input_width: width,
        train_accuracy: accuracy(&store, (&l1, &l2), messages, labels, &split.train_ids)?,
        holdout_accuracy: accuracy(&store, (&l1, &l2), messages, labels, &split.test_ids)?,
        positive_fraction: labels.iter().sum::<usize>() as f64 / labels.len() as f64,
    })
}
