use super::{AnalysisError, Result};
use crate::agents::{MessageBundle, Receiver};
use crate::env::ComparisonPair;
use crate::training::score_predictions;

/// Anything that maps `[message(A), message(B)]` rows to per-label
/// probabilities that A is higher.
pub trait PairPredictor {
    fn predict_pairs(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

impl PairPredictor for Receiver {
    fn predict_pairs(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.predict(rows)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionResult {
    pub zeroed: Vec<usize>,
    pub baseline: Vec<f64>,
    pub intervened: Vec<f64>,
    /// `baseline - intervened`, per property.
    pub drop: Vec<f64>,
    pub pairs: usize,
}

fn accuracy(messages: &[Vec<f64>], predictor: &dyn PairPredictor, pairs: &[ComparisonPair]) -> Result<Vec<f64>> {
    let mut probs = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(4096) {
        let rows: Vec<Vec<f64>> = chunk
            .iter()
            .map(|p| messages[p.a].iter().chain(&messages[p.b]).copied().collect())
            .collect();
        probs.extend(predictor.predict_pairs(&rows)?);
    }
    Ok(score_predictions(pairs, &probs).per_property)
}

/// Replace the listed positions of every scene's bundle with all-zero
/// vectors and re-score the same pairs. `messages` is indexed by scene id.
pub fn position_zero_intervention(
    messages: &[MessageBundle],
    predictor: &dyn PairPredictor,
    zeroed: &[usize],
    pairs: &[ComparisonPair],
) -> Result<InterventionResult> {
    let positions = messages.first().map_or(0, |m| m.positions());
    if let Some(&position) = zeroed.iter().find(|p| **p >= positions) {
        return Err(AnalysisError::Position { position, positions });
    }
    let plain: Vec<Vec<f64>> = messages.iter().map(|m| m.values.clone()).collect();
    let cut: Vec<Vec<f64>> = messages
        .iter()
        .map(|m| {
            let mut m = m.clone();
            for &p in zeroed {
                m.zero_position(p);
            }
            m.values
        })
        .collect();
    let baseline = accuracy(&plain, predictor, pairs)?;
    let intervened = accuracy(&cut, predictor, pairs)?;
    Ok(InterventionResult {
        zeroed: zeroed.to_vec(),
        drop: baseline.iter().zip(&intervened).map(|(b, i)| b - i).collect(),
        baseline,
        intervened,
        pairs: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selectivity {
    pub value: f64,
    /// No block caused any drop.
    pub degenerate: bool,
    /// `None` for blocks whose zeroing changed nothing.
    pub per_block: Vec<Option<f64>>,
}

/// Mean over blocks of `targeted / (targeted + non-targeted)`, where the
/// targeted drop is the block's largest property drop and the non-targeted
/// drop is the mean of the rest. Negative drops count as zero.
pub fn selectivity(drops: &[Vec<f64>]) -> Selectivity {
    let per_block: Vec<Option<f64>> = drops
        .iter()
        .map(|d| {
            let d: Vec<f64> = d.iter().map(|x| x.max(0.0)).collect();
            let (best, t) = d.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, x)| if x > a.1 { (i, x) } else { a });
            let others: Vec<f64> = d.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, x)| *x).collect();
            let n = if others.is_empty() { 0.0 } else { others.iter().sum::<f64>() / others.len() as f64 };
            (t + n > 0.0).then(|| t / (t + n))
        })
        .collect();
    let used: Vec<f64> = per_block.iter().flatten().copied().collect();
    if used.is_empty() {
        return Selectivity { value: 0.0, degenerate: true, per_block };
    }
    Selectivity { value: used.iter().sum::<f64>() / used.len() as f64, degenerate: false, per_block }
}

/// Zero each position block in turn and score how selectively it disrupts
/// one property. Works for either channel since blocks are one position.
pub fn continuous_selectivity(
    messages: &[MessageBundle],
    predictor: &dyn PairPredictor,
    pairs: &[ComparisonPair],
) -> Result<Selectivity> {
    let positions = messages.first().map_or(0, |m| m.positions());
    let drops = (0..positions)
        .map(|p| Ok(position_zero_intervention(messages, predictor, &[p], pairs)?.drop))
        .collect::<Result<Vec<_>>>()?;
    Ok(selectivity(&drops))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectivity_extremes() {
        assert_eq!(selectivity(&[vec![0.3, 0.0], vec![0.0, 0.2]]).value, 1.0);
        assert_eq!(selectivity(&[vec![0.1, 0.1]]).value, 0.5);
        let d = selectivity(&[vec![0.0, 0.0]]);
        assert!(d.degenerate);
        assert_eq!(d.per_block, vec![None]);
    }
}
