use rand::Rng;

use super::Result;
use crate::agents::{EncodedScenes, FrozenRandomEncoder, InputEncoder};
use crate::env::{all_pairs, latin_square_split, make_comparison_pairs, ComparisonPair, Dataset, DatasetSplit, Standardizer};
use crate::seed;

/// A dataset with its holdout split and frozen per-frame features.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub standardizer: Standardizer,
    pub input: InputEncoder,
    pub frozen: Option<FrozenRandomEncoder>,
    pub encoded: EncodedScenes,
}

impl Prepared {
    /// Split, standardizer and frozen encoder all derive from `seed`.
    pub fn new(dataset: Dataset, input: InputEncoder, seed: u64) -> Result<Self> {
        let split = latin_square_split(&dataset.scenes, dataset.grid.bins_per_property(), &mut seed::stream(seed, "split"))?;
        let standardizer = Standardizer::fit(&dataset.scenes, &split.train_ids);
        let frozen = match input {
            InputEncoder::FrozenMlp => Some(FrozenRandomEncoder::new(dataset.dims(), &mut seed::stream(seed, "frozen"))),
            InputEncoder::Identity => None,
        };
        let encoded = EncodedScenes::build(&dataset.scenes, &standardizer, frozen.as_ref());
        Ok(Prepared { dataset, split, standardizer, input, frozen, encoded })
    }

    pub fn n_props(&self) -> usize {
        self.dataset.grid.len()
    }

    pub fn properties(&self) -> Vec<usize> {
        (0..self.n_props()).collect()
    }

    /// Fresh uniform tie-free training pairs.
    pub fn sample_train_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<ComparisonPair>> {
        Ok(make_comparison_pairs(&self.split.train_ids, &self.dataset.scenes, &self.properties(), n, rng)?)
    }

    fn same_property(&self) -> Vec<(usize, usize)> {
        self.properties().into_iter().map(|p| (p, p)).collect()
    }

    /// Every ordered tie-free pair of held-out scenes.
    pub fn test_pairs(&self) -> Vec<ComparisonPair> {
        all_pairs(&self.split.test_ids, &self.dataset.scenes, &self.same_property())
    }

    pub fn train_eval_pairs(&self) -> Vec<ComparisonPair> {
        all_pairs(&self.split.train_ids, &self.dataset.scenes, &self.same_property())
    }
}

/// Unique scenes of a batch and each pair's rows into them.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub ids: Vec<usize>,
    pub a_rows: Vec<usize>,
    pub b_rows: Vec<usize>,
    /// `[pairs, labels]` row-major, 1 when A is higher.
    pub targets: Vec<f64>,
}

pub fn pair_rows(pairs: &[ComparisonPair]) -> BatchPlan {
    let mut ids: Vec<usize> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let row = |s: usize| ids.binary_search(&s).expect("scene in batch");
    BatchPlan {
        a_rows: pairs.iter().map(|p| row(p.a)).collect(),
        b_rows: pairs.iter().map(|p| row(p.b)).collect(),
        targets: pairs.iter().flat_map(|p| p.targets()).collect(),
        ids,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub per_property: Vec<f64>,
    /// Fraction of pairs with every label right.
    pub both: f64,
    pub pairs: usize,
}

impl Accuracy {
    pub fn mean(all: &[Accuracy]) -> Accuracy {
        let n = all.len() as f64;
        let np = all[0].per_property.len();
        Accuracy {
            per_property: (0..np).map(|p| all.iter().map(|a| a.per_property[p]).sum::<f64>() / n).collect(),
            both: all.iter().map(|a| a.both).sum::<f64>() / n,
            pairs: all[0].pairs,
        }
    }
}

/// Per-label and all-correct accuracy of `probs` (probability that A is
/// higher) against `pairs`. Probabilities of exactly 0.5 count as half right.
pub fn score_predictions(pairs: &[ComparisonPair], probs: &[Vec<f64>]) -> Accuracy {
    let np = pairs.first().map_or(0, |p| p.labels.len());
    let mut correct = vec![0.0; np];
    let mut both = 0.0;
    for (p, pr) in pairs.iter().zip(probs) {
        let mut all = 1.0;
        for (j, t) in p.targets().enumerate() {
            let score = if pr[j] == 0.5 {
                0.5
            } else if (pr[j] > 0.5) == (t > 0.5) {
                1.0
            } else {
                0.0
            };
            correct[j] += score;
            all *= score;
        }
        both += all;
    }
    let n = pairs.len().max(1) as f64;
    Accuracy {
        per_property: correct.into_iter().map(|c| c / n).collect(),
        both: both / n,
        pairs: pairs.len(),
    }
}

/// Score a pair predictor fed `[message(A), message(B)]` rows, where
/// `messages` is indexed by scene id.
pub fn evaluate_pairs(
    messages: &[Vec<f64>],
    pairs: &[ComparisonPair],
    mut predict: impl FnMut(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
) -> Result<Accuracy> {
    let mut probs = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(4096) {
        let rows: Vec<Vec<f64>> = chunk
            .iter()
            .map(|p| messages[p.a].iter().chain(&messages[p.b]).copied().collect())
            .collect();
        probs.extend(predict(&rows)?);
    }
    Ok(score_predictions(pairs, &probs))
}
