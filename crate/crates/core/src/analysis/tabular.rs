use std::collections::HashMap;

use super::{PairPredictor, Result};
use crate::tensor::argmax;

/// Lookup-table listener over one-hot message pairs.
///
/// Each stored row keeps the symbol at every position of both sides and the
/// mean target seen for it. A query with all-zero positions is answered by
/// averaging every stored row that agrees on the positions that remain, so a
/// zeroed position is treated as unknown rather than as a new symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularReceiver {
    pub v: usize,
    keys: Vec<Vec<usize>>,
    means: Vec<Vec<f64>>,
}

fn decode(row: &[f64], v: usize) -> Vec<Option<usize>> {
    row.chunks(v).map(|c| if c.iter().all(|x| *x == 0.0) { None } else { Some(argmax(c)) }).collect()
}

impl TabularReceiver {
    /// Memorize `rows` (one-hot pair inputs) with their per-label targets.
    pub fn fit(rows: &[Vec<f64>], targets: &[Vec<f64>], v: usize) -> Self {
        let mut keys: Vec<Vec<usize>> = Vec::new();
        let mut sums: Vec<Vec<f64>> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        for (row, t) in rows.iter().zip(targets) {
            let key: Vec<usize> = row.chunks(v).map(argmax).collect();
            match index.get(&key) {
                Some(&i) => {
                    sums[i].iter_mut().zip(t).for_each(|(s, x)| *s += x);
                    counts[i] += 1.0;
                }
                None => {
                    index.insert(key.clone(), keys.len());
                    keys.push(key);
                    sums.push(t.clone());
                    counts.push(1.0);
                }
            }
        }
        let means = sums.into_iter().zip(counts).map(|(s, c)| s.into_iter().map(|x| x / c).collect()).collect();
        TabularReceiver { v, keys, means }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn lookup(&self, row: &[f64]) -> Vec<f64> {
        let q = decode(row, self.v);
        let n_out = self.means.first().map_or(0, |m| m.len());
        let mut acc = vec![0.0; n_out];
        let mut hits = 0.0;
        for (key, mean) in self.keys.iter().zip(&self.means) {
            if key.iter().zip(&q).all(|(k, s)| s.map_or(true, |s| s == *k)) {
                acc.iter_mut().zip(mean).for_each(|(a, m)| *a += m);
                hits += 1.0;
            }
        }
        if hits == 0.0 {
            return vec![0.5; n_out];
        }
        acc.into_iter().map(|a| a / hits).collect()
    }
}

impl PairPredictor for TabularReceiver {
    fn predict_pairs(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(rows.iter().map(|r| self.lookup(r)).collect())
    }
}
