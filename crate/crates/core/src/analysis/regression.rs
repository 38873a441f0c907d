use rand::seq::SliceRandom;

use super::{AnalysisError, Result};
use crate::agents::{Init, Linear, MessageBundle};
use crate::env::{DatasetSplit, Scene};
use crate::seed;
use crate::tensor::{argmax, clip_gradients, Adam, Graph, ParamStore, Tensor};

const HIDDEN: usize = 64;
const BATCH: usize = 32;
const LR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub agent: usize,
    pub property: usize,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    pub chance: f64,
}

/// Classify the bin of `property` from one agent's message for a single
/// scene, trained on the training split and scored on held-out scenes.
pub fn single_message_regression(
    messages: &[MessageBundle],
    scenes: &[Scene],
    split: &DatasetSplit,
    agent: usize,
    property: usize,
    epochs: usize,
    seed: u64,
) -> Result<RegressionResult> {
    let first = messages.first().ok_or_else(|| AnalysisError::Length("no messages".into()))?;
    if agent >= first.n_agents {
        return Err(AnalysisError::Position { position: agent, positions: first.n_agents });
    }
    let span = first.k * first.v;
    let inputs: Vec<Vec<f64>> = messages.iter().map(|m| m.values[agent * span..(agent + 1) * span].to_vec()).collect();
    let labels: Vec<usize> = scenes.iter().map(|s| s.property_bins[property]).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let mut rng = seed::stream(seed, "regression");
    let mut store = ParamStore::new();
    let l1 = Linear::new(&mut store, "hidden", span, HIDDEN, Init::He, &mut rng);
    let l2 = Linear::new(&mut store, "out", HIDDEN, classes, Init::Lecun, &mut rng);
    let mut adam = Adam::new(LR);
    let mut order = split.train_ids.clone();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH) {
            let rows: Vec<Vec<f64>> = batch.iter().map(|i| inputs[*i].clone()).collect();
            let ys: Vec<usize> = batch.iter().map(|i| labels[*i]).collect();
            let mut g = Graph::new();
            let p = store.bind(&mut g);
            let x = g.constant(Tensor::from_rows(&rows)?);
            let h = l1.forward(&mut g, &p, x);
            let h = g.relu(h);
            let z = l2.forward(&mut g, &p, h);
            let ce = g.cross_entropy(z, &ys);
            let loss = g.mean(ce);
            let grads = g.backward(loss)?;
            store.collect_grads(&grads, &p);
            clip_gradients(&mut store, 1.0);
            adam.step(&mut store)?;
        }
    }
    let score = |ids: &[usize]| -> Result<f64> {
        let rows: Vec<Vec<f64>> = ids.iter().map(|i| inputs[*i].clone()).collect();
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::from_rows(&rows)?);
        let h = l1.forward(&mut g, &p, x);
        let h = g.relu(h);
        let z = l2.forward(&mut g, &p, h);
        let hits = g.value(z).data().chunks(classes).zip(ids).filter(|(r, i)| argmax(r) == labels[**i]).count();
        Ok(hits as f64 / ids.len().max(1) as f64)
    };
    Ok(RegressionResult {
        agent,
        property,
        train_accuracy: score(&split.train_ids)?,
        holdout_accuracy: score(&split.test_ids)?,
        chance: 1.0 / classes as f64,
    })
}
