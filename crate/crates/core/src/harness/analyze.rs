use std::fmt::Write as _;

use super::{LoadedRun, Result};
use crate::analysis::{
    cross_property_transfer, position_zero_intervention, selectivity, single_message_regression, RegressionResult,
    Selectivity, TransferConfig, TransferResult,
};
use crate::agents::MessageBundle;
use crate::env::ComparisonPair;
use crate::tensor::argmax;

/// Which analyses to run on a stored checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// `(pa, pb)` for the cross-property task; `None` skips it.
    pub transfer: Option<(usize, usize)>,
    pub transfer_cfg: TransferConfig,
    /// Epochs for single-message regression; 0 skips it.
    pub regression_epochs: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { transfer: Some((0, 1)), transfer_cfg: TransferConfig::default(), regression_epochs: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAnalysis {
    pub seed: u64,
    /// Per position, per property accuracy drop on held-out pairs, averaged
    /// over the receiver population.
    pub drops: Vec<Vec<f64>>,
    /// Same on the training pairs.
    pub train_drops: Vec<Vec<f64>>,
    /// Property each position carries the most information about.
    pub relevant: Vec<usize>,
    pub relevant_drop: f64,
    pub irrelevant_drop: f64,
    pub selectivity: Selectivity,
    pub transfer: Option<TransferResult>,
    pub regression: Vec<RegressionResult>,
}

fn mean_drops(run: &LoadedRun, messages: &[MessageBundle], pairs: &[ComparisonPair]) -> Result<Vec<Vec<f64>>> {
    let positions = messages.first().map_or(0, |m| m.positions());
    let n_props = run.prepared.n_props();
    let mut out = vec![vec![0.0; n_props]; positions];
    for receiver in &run.receivers {
        for (p, row) in out.iter_mut().enumerate() {
            let r = position_zero_intervention(messages, receiver, &[p], pairs)?;
            row.iter_mut().zip(&r.drop).for_each(|(a, d)| *a += d / run.receivers.len() as f64);
        }
    }
    Ok(out)
}

/// Position-zeroing interventions, selectivity, cross-property transfer and
/// single-message regression for one stored run. Interventions need the
/// receiver population, so baseline runs only get transfer and regression.
pub fn analyze_run(run: &LoadedRun, opts: &AnalysisOptions) -> Result<RunAnalysis> {
    let prepared = &run.prepared;
    let ids: Vec<usize> = (0..prepared.dataset.len()).collect();
    let messages = run.sender.eval_messages(&prepared.encoded, &ids)?;
    let (drops, train_drops) = if run.receivers.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (mean_drops(run, &messages, &prepared.test_pairs())?, mean_drops(run, &messages, &prepared.train_eval_pairs())?)
    };
    let mi = &run.record.metrics.mi;
    let relevant: Vec<usize> = (0..mi.positions).map(|k| argmax(mi.row(k))).collect();
    let (mut rel, mut irr, mut n_irr) = (0.0, 0.0, 0usize);
    for (k, row) in drops.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            if relevant.get(k) == Some(&j) {
                rel += d;
            } else {
                irr += d;
                n_irr += 1;
            }
        }
    }
    let transfer = match opts.transfer {
        Some((pa, pb)) => Some(cross_property_transfer(&run.sender, prepared, pa, pb, &opts.transfer_cfg, run.record.seed)?),
        None => None,
    };
    let mut regression = Vec::new();
    if opts.regression_epochs > 0 {
        for agent in 0..run.sender.cfg.n_agents {
            for property in 0..prepared.n_props() {
                regression.push(single_message_regression(
                    &messages,
                    &prepared.dataset.scenes,
                    &prepared.split,
                    agent,
                    property,
                    opts.regression_epochs,
                    run.record.seed,
                )?);
            }
        }
    }
    Ok(RunAnalysis {
        seed: run.record.seed,
        selectivity: selectivity(&drops),
        relevant_drop: if drops.is_empty() { 0.0 } else { rel / drops.len() as f64 },
        irrelevant_drop: if n_irr == 0 { 0.0 } else { irr / n_irr as f64 },
        drops,
        train_drops,
        relevant,
        transfer,
        regression,
    })
}

impl RunAnalysis {
    /// `kind,seed,a,b,value` rows: one per intervention cell, then the
    /// summary scalars, transfer and regression results.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,seed,a,b,value\n");
        for (name, table) in [("drop_holdout", &self.drops), ("drop_train", &self.train_drops)] {
            for (k, row) in table.iter().enumerate() {
                for (j, d) in row.iter().enumerate() {
                    let _ = writeln!(out, "{name},{},{k},{j},{d}", self.seed);
                }
            }
        }
        let _ = writeln!(out, "relevant_drop,{},,,{}", self.seed, self.relevant_drop);
        let _ = writeln!(out, "irrelevant_drop,{},,,{}", self.seed, self.irrelevant_drop);
        let _ = writeln!(out, "selectivity,{},,,{}", self.seed, self.selectivity.value);
        let _ = writeln!(out, "selectivity_degenerate,{},,,{}", self.seed, self.selectivity.degenerate);
        if let Some(t) = &self.transfer {
            let _ = writeln!(out, "transfer,{},{},,{}", self.seed, t.task, t.holdout_accuracy);
        }
        for r in &self.regression {
            let _ = writeln!(out, "regression_holdout,{},{},{},{}", self.seed, r.agent, r.property, r.holdout_accuracy);
        }
        out
    }

    pub fn regression_mean(&self) -> Option<f64> {
        if self.regression.is_empty() {
            return None;
        }
        Some(self.regression.iter().map(|r| r.holdout_accuracy).sum::<f64>() / self.regression.len() as f64)
    }
}
