use rand::seq::index::sample;

use super::{ProtocolTable, Result};
use crate::seed;

/// Tables above this many rows are scored on a seeded subsample.
pub const TOPSIM_MAX_ROWS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopSim {
    pub value: f64,
    /// Set when either distance vector has zero variance; `value` is then 0.
    pub degenerate: bool,
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation with average ranks for ties; `None` when either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "spearman lengths");
    if x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Rank correlation between Manhattan distances over attribute bins and
/// Hamming distances over symbol lists, across all unordered row pairs.
pub fn topsim(table: &ProtocolTable, sample_seed: u64) -> Result<TopSim> {
    let rows: Vec<usize> = if table.rows() > TOPSIM_MAX_ROWS {
        let mut rng = seed::stream(sample_seed, "topsim");
        let mut r = sample(&mut rng, table.rows(), TOPSIM_MAX_ROWS).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..table.rows()).collect()
    };
    let mut meaning = Vec::new();
    let mut message = Vec::new();
    for (i, &a) in rows.iter().enumerate() {
        for &b in &rows[i + 1..] {
            let m: usize = table.attributes[a]
                .iter()
                .zip(&table.attributes[b])
                .map(|(x, y)| x.abs_diff(*y))
                .sum();
            let h = table.symbols[a].iter().zip(&table.symbols[b]).filter(|(x, y)| x != y).count();
            meaning.push(m as f64);
            message.push(h as f64);
        }
    }
    Ok(match spearman(&meaning, &message) {
        Some(value) => TopSim { value, degenerate: false },
        None => TopSim { value: 0.0, degenerate: true },
    })
}
