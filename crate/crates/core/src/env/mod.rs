//! Scene generators, property grids, holdout splits and comparison pairs.

mod abstract_scenes;
mod collision;
mod dataset;
mod grid;
mod pairs;
mod ramp;
mod split;
mod spring;

pub use abstract_scenes::{gen_abstract_scenes, quadrant_features, AbstractLayout, Shape, ABSTRACT_FEATURES};
pub use collision::{collision_velocities, gen_collision_trajectories, CollisionParams};
pub use dataset::{read_dataset, read_manifest, write_dataset, write_manifest, Dataset, Domain, Standardizer};
pub use grid::{linspace, PropertyGrid, Property};
pub use pairs::{all_pairs, make_comparison_pairs, make_cross_pairs, ComparisonPair, Label};
pub use ramp::{gen_ramp_trajectories, ramp_state, RampParams, RAMP_ANGLE_DEG};
pub use split::{latin_square_split, DatasetSplit};
pub use spring::{gen_spring_mass, spring_state, SPRING_TIMES};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid cell {cell:?} is overdamped beyond oscillation (k/m < gamma^2)")]
    ImaginaryFrequency { cell: Vec<usize> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("could not draw a tie-free pair in {0} attempts")]
    PairSampling(usize),
    #[error("dataset io: {0}")]
    Io(String),
    #[error("malformed dataset at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// One observation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: usize,
    /// Row-major `[frames, dims]`.
    pub features: Vec<f64>,
    pub frames: usize,
    pub dims: usize,
    pub property_bins: Vec<usize>,
    pub property_values: Vec<f64>,
    pub nuisance_seed: u64,
    /// Downstream outcome scalar, when the domain defines one.
    pub outcome: Option<f64>,
}

impl Scene {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.features[t * self.dims..(t + 1) * self.dims]
    }

    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite())
    }
}

/// Cell index of each scene when scenes are spread round-robin over a
/// two-property grid: scene `i` sits in cell `i mod 25`.
pub(crate) fn cell_of(i: usize, bins: usize) -> (usize, usize) {
    let c = i % (bins * bins);
    (c / bins, c % bins)
}
