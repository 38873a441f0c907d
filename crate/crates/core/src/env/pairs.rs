use rand::seq::SliceRandom;
use rand::Rng;

use super::{EnvError, Result, Scene};

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    AHigher,
    BHigher,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::AHigher => 1.0,
            Label::BHigher => 0.0,
        }
    }
}

/// Two scenes and, per compared quantity, which side is larger.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComparisonPair {
    pub a: usize,
    pub b: usize,
    pub labels: Vec<Label>,
}

impl ComparisonPair {
    pub fn targets(&self) -> impl Iterator<Item = f64> + '_ {
        self.labels.iter().map(|l| l.target())
    }
}

/// `(property of A, property of B)` for each compared quantity.
fn label_for(scenes: &[Scene], a: usize, b: usize, compare: &[(usize, usize)]) -> Option<Vec<Label>> {
    compare
        .iter()
        .map(|&(pa, pb)| {
            let (x, y) = (scenes[a].property_bins[pa], scenes[b].property_bins[pb]);
            match x.cmp(&y) {
                std::cmp::Ordering::Greater => Some(Label::AHigher),
                std::cmp::Ordering::Less => Some(Label::BHigher),
                std::cmp::Ordering::Equal => None,
            }
        })
        .collect()
}

fn sample_pairs<R: Rng + ?Sized>(
    pool: &[usize],
    scenes: &[Scene],
    compare: &[(usize, usize)],
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<ComparisonPair>> {
    if pool.len() < 2 {
        return Err(EnvError::PairSampling(0));
    }
    let mut out = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            let a = *pool.choose(rng).expect("non-empty pool");
            let b = *pool.choose(rng).expect("non-empty pool");
            if a == b {
                continue;
            }
            if let Some(labels) = label_for(scenes, a, b, compare) {
                found = Some(ComparisonPair { a, b, labels });
                break;
            }
        }
        out.push(found.ok_or(EnvError::PairSampling(MAX_ATTEMPTS))?);
    }
    Ok(out)
}

/// Uniform tie-free pairs from `pool`, labelled on each of `properties`.
/// Pairs tied on any labelled property are redrawn.
pub fn make_comparison_pairs<R: Rng + ?Sized>(
    pool: &[usize],
    scenes: &[Scene],
    properties: &[usize],
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<ComparisonPair>> {
    let compare: Vec<_> = properties.iter().map(|p| (*p, *p)).collect();
    sample_pairs(pool, scenes, &compare, n_pairs, rng)
}

/// Pairs labelled by "property `pa` of A exceeds property `pb` of B".
pub fn make_cross_pairs<R: Rng + ?Sized>(
    pool: &[usize],
    scenes: &[Scene],
    pa: usize,
    pb: usize,
    n_pairs: usize,
    rng: &mut R,
) -> Result<Vec<ComparisonPair>> {
    sample_pairs(pool, scenes, &[(pa, pb)], n_pairs, rng)
}

/// Every ordered tie-free pair within `pool`.
pub fn all_pairs(pool: &[usize], scenes: &[Scene], compare: &[(usize, usize)]) -> Vec<ComparisonPair> {
    let mut out = Vec::new();
    for &a in pool {
        for &b in pool {
            if a == b {
                continue;
            }
            if let Some(labels) = label_for(scenes, a, b, compare) {
                out.push(ComparisonPair { a, b, labels });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{gen_spring_mass, PropertyGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenes() -> Vec<Scene> {
        gen_spring_mass(300, &PropertyGrid::spring_mass(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn labels_follow_bins() {
        let s = scenes();
        // scene 4 sits in cell (0, 4), scene 20 in (4, 0)
        let labels = label_for(&s, 4, 20, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(labels, vec![Label::BHigher, Label::AHigher]);
    }

    #[test]
    fn sampled_pairs_are_tie_free_and_balanced() {
        let s = scenes();
        let pool: Vec<usize> = (0..300).collect();
        let pairs = make_comparison_pairs(&pool, &s, &[0, 1], 10_000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut a_higher = [0usize; 2];
        for p in &pairs {
            for prop in 0..2 {
                assert_ne!(s[p.a].property_bins[prop], s[p.b].property_bins[prop]);
                if p.labels[prop] == Label::AHigher {
                    a_higher[prop] += 1;
                }
            }
        }
        for c in a_higher {
            assert!((c as f64 / 10_000.0 - 0.5).abs() < 0.03);
        }
    }

    #[test]
    fn impossible_pool_errors() {
        let s = scenes();
        // scenes 0 and 25 share cell (0, 0)
        let err = make_comparison_pairs(&[0, 25], &s, &[0], 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, EnvError::PairSampling(MAX_ATTEMPTS));
    }

    #[test]
    fn exhaustive_pairs_are_symmetric() {
        let s = scenes();
        let pool: Vec<usize> = (0..50).collect();
        let pairs = all_pairs(&pool, &s, &[(0, 0), (1, 1)]);
        let a = pairs.iter().filter(|p| p.labels[0] == Label::AHigher).count();
        assert_eq!(2 * a, pairs.len());
    }
}
