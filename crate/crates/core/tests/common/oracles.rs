//! Brute-force reference implementations of the protocol metrics, written
//! from the definitions with no shared code.

use std::collections::HashMap;

fn entropy<K: std::hash::Hash + Eq>(items: impl Iterator<Item = K>) -> f64 {
    let mut counts: HashMap<K, f64> = HashMap::new();
    let mut n = 0.0;
    for k in items {
        *counts.entry(k).or_default() += 1.0;
        n += 1.0;
    }
    counts.values().map(|c| -(c / n) * (c / n).ln()).sum()
}

/// `H(X) + H(Y) - H(X, Y)` in nats, with round-off below 1e-12 snapped to 0.
pub fn mi(xs: &[usize], ys: &[usize]) -> f64 {
    let v = entropy(xs.iter()) + entropy(ys.iter()) - entropy(xs.iter().zip(ys));
    if v < 1e-12 { 0.0 } else { v }
}

fn gap(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (v[0] - v[1]) / (v[0] + 1e-8)
}

fn column<T: Copy>(rows: &[Vec<T>], k: usize) -> Vec<T> {
    rows.iter().map(|r| r[k]).collect()
}

pub fn posdis(symbols: &[Vec<usize>], attrs: &[Vec<usize>]) -> f64 {
    let positions = symbols[0].len();
    let mut total = 0.0;
    for k in 0..positions {
        let m = column(symbols, k);
        total += gap((0..attrs[0].len()).map(|j| mi(&m, &column(attrs, j))).collect());
    }
    total / positions as f64
}

pub fn bosdis(symbols: &[Vec<usize>], attrs: &[Vec<usize>], vocab: usize) -> f64 {
    let mut scores = Vec::new();
    for s in 0..vocab {
        let counts: Vec<usize> = symbols.iter().map(|r| r.iter().filter(|x| **x == s).count()).collect();
        let mis: Vec<f64> = (0..attrs[0].len()).map(|j| mi(&counts, &column(attrs, j))).collect();
        if mis.iter().any(|m| *m > 0.0) {
            scores.push(gap(mis));
        }
    }
    if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 }
}

/// Rank of each value: one plus the number strictly below, plus half the
/// number of other equal values.
fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

pub fn topsim(symbols: &[Vec<usize>], attrs: &[Vec<usize>]) -> Option<f64> {
    let mut meaning = Vec::new();
    let mut message = Vec::new();
    for i in 0..symbols.len() {
        for j in i + 1..symbols.len() {
            meaning.push(attrs[i].iter().zip(&attrs[j]).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum());
            message.push(symbols[i].iter().zip(&symbols[j]).filter(|(a, b)| a != b).count() as f64);
        }
    }
    spearman(&meaning, &message)
}
