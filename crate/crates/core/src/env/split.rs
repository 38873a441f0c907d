use rand::seq::SliceRandom;
use rand::Rng;

use super::{EnvError, Result, Scene};

/// Compositional holdout: whole grid cells are withheld from training.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    /// `(row bin, column bin)` of each withheld cell.
    pub heldout_cells: Vec<(usize, usize)>,
}

impl DatasetSplit {
    pub fn is_heldout(&self, bins: &[usize]) -> bool {
        self.heldout_cells.contains(&(bins[0], bins[1]))
    }
}

/// Withhold one cell per row and per column of a square two-property grid,
/// chosen by a seeded random permutation. Every bin of every property stays
/// visible in training; only the combinations are new at test time.
pub fn latin_square_split<R: Rng + ?Sized>(scenes: &[Scene], bins: usize, rng: &mut R) -> Result<DatasetSplit> {
    if bins < 2 {
        return Err(EnvError::InvalidGrid(format!("holdout grid needs at least 2 bins, got {bins}")));
    }
    if let Some(s) = scenes.iter().find(|s| s.property_bins.len() != 2) {
        return Err(EnvError::InvalidGrid(format!(
            "holdout grid must be two-dimensional, scene {} has {} properties",
            s.id,
            s.property_bins.len()
        )));
    }
    if let Some(s) = scenes.iter().find(|s| s.property_bins.iter().any(|b| *b >= bins)) {
        return Err(EnvError::InvalidGrid(format!("scene {} lies outside the {bins}x{bins} grid", s.id)));
    }
    let mut cols: Vec<usize> = (0..bins).collect();
    cols.shuffle(rng);
    let heldout_cells: Vec<(usize, usize)> = cols.into_iter().enumerate().collect();
    let mut split = DatasetSplit {
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        heldout_cells,
    };
    for s in scenes {
        if split.is_heldout(&s.property_bins) {
            split.test_ids.push(s.id);
        } else {
            split.train_ids.push(s.id);
        }
    }
    Ok(split)
}
