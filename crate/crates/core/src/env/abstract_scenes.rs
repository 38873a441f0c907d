use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cell_of, PropertyGrid, Scene};

/// Width of one quadrant summary vector.
pub const ABSTRACT_FEATURES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub x: f64,
    pub y: f64,
    /// Radius.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractLayout {
    pub shapes: Vec<Shape>,
}

impl AbstractLayout {
    /// `count` shapes uniform in the unit square whose radii average exactly
    /// `mean_size` up to rounding.
    pub fn sample<R: Rng + ?Sized>(count: usize, mean_size: f64, rng: &mut R) -> Self {
        let mut sizes: Vec<f64> = (0..count).map(|_| mean_size * (1.0 + rng.gen_range(-0.25..0.25))).collect();
        let shift = mean_size - sizes.iter().sum::<f64>() / count as f64;
        sizes.iter_mut().for_each(|s| *s += shift);
        let shapes = sizes
            .into_iter()
            .map(|size| Shape {
                x: rng.gen(),
                y: rng.gen(),
                size,
            })
            .collect();
        AbstractLayout { shapes }
    }
}

fn quadrant(s: &Shape) -> usize {
    (s.x >= 0.5) as usize + 2 * (s.y >= 0.5) as usize
}

/// Four quadrant views, nine summary statistics each:
/// count, mean x, mean y, mean size, size stddev, min size, max size,
/// occupied-area fraction, count / 6. Empty quadrants are all zeros.
pub fn quadrant_features(layout: &AbstractLayout) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * ABSTRACT_FEATURES);
    for q in 0..4 {
        let members: Vec<&Shape> = layout.shapes.iter().filter(|s| quadrant(s) == q).collect();
        if members.is_empty() {
            out.extend([0.0; ABSTRACT_FEATURES]);
            continue;
        }
        let n = members.len() as f64;
        let mean = |f: fn(&Shape) -> f64| members.iter().map(|s| f(s)).sum::<f64>() / n;
        let mean_size = mean(|s| s.size);
        let var = members.iter().map(|s| (s.size - mean_size).powi(2)).sum::<f64>() / n;
        let min = members.iter().map(|s| s.size).fold(f64::INFINITY, f64::min);
        let max = members.iter().map(|s| s.size).fold(f64::NEG_INFINITY, f64::max);
        let area: f64 = members.iter().map(|s| std::f64::consts::PI * s.size * s.size).sum();
        out.extend([
            n,
            mean(|s| s.x),
            mean(|s| s.y),
            mean_size,
            var.sqrt(),
            min,
            max,
            area / 0.25,
            n / 6.0,
        ]);
    }
    out
}

/// Abstract geometric scenes over (numerosity, mean size).
pub fn gen_abstract_scenes<R: Rng + ?Sized>(n_scenes: usize, rng: &mut R) -> Vec<Scene> {
    let grid = PropertyGrid::abstract_scenes();
    let bins = grid.bins_per_property();
    (0..n_scenes)
        .map(|id| {
            let (nb, sb) = cell_of(id, bins);
            let nuisance_seed: u64 = rng.gen();
            let count = grid.value(0, nb) as usize;
            let layout = AbstractLayout::sample(count, grid.value(1, sb), &mut ChaCha8Rng::seed_from_u64(nuisance_seed));
            Scene {
                id,
                features: quadrant_features(&layout),
                frames: 4,
                dims: ABSTRACT_FEATURES,
                property_bins: vec![nb, sb],
                property_values: grid.values(&[nb, sb]),
                nuisance_seed,
                outcome: None,
            }
        })
        .collect()
}
