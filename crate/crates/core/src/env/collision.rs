use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cell_of, EnvError, PropertyGrid, Result, Scene};

const FRAMES: usize = 24;
const FRAME_DT: f64 = 1.0 / 12.0;
const START_GAP: f64 = 1.0;
/// Sum of the two sphere radii.
const CONTACT_GAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionParams {
    /// Mass of B over mass of A (A is 1 kg).
    pub mass_ratio: f64,
    pub restitution: f64,
    /// Approach speed of A.
    pub speed: f64,
    pub x_offset: f64,
}

/// Post-impact velocities `(v_a, v_b)` for A (mass 1, speed `v`) hitting a
/// resting B of mass `r`.
pub fn collision_velocities(r: f64, e: f64, v: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(EnvError::InvalidParameter(format!("mass ratio must be positive, got {r}")));
    }
    Ok((v * (1.0 - e * r) / (1.0 + r), v * (1.0 + e) / (1.0 + r)))
}

impl CollisionParams {
    pub fn positions(&self, t: f64) -> Result<(f64, f64)> {
        let (va, vb) = collision_velocities(self.mass_ratio, self.restitution, self.speed)?;
        let xa0 = self.x_offset;
        let xb0 = self.x_offset + START_GAP;
        let tc = (START_GAP - CONTACT_GAP) / self.speed;
        Ok(if t < tc {
            (xa0 + self.speed * t, xb0)
        } else {
            (xa0 + self.speed * tc + va * (t - tc), xb0 + vb * (t - tc))
        })
    }
}

/// 1-D two-sphere collisions over (mass ratio, restitution): 24 frames of
/// (x_A, x_B). Each scene records |v_B'| as its outcome.
pub fn gen_collision_trajectories<R: Rng + ?Sized>(n_scenes: usize, grid: &PropertyGrid, rng: &mut R) -> Result<Vec<Scene>> {
    if grid.len() != 2 {
        return Err(EnvError::InvalidGrid("collision needs (mass_ratio, restitution)".into()));
    }
    if grid.properties()[0].bins.iter().any(|r| *r <= 0.0) {
        return Err(EnvError::InvalidParameter("mass ratio must be positive".into()));
    }
    let bins = grid.bins_per_property();
    let mut scenes = Vec::with_capacity(n_scenes);
    for id in 0..n_scenes {
        let (rb, eb) = cell_of(id, bins);
        let nuisance_seed: u64 = rng.gen();
        let mut nr = ChaCha8Rng::seed_from_u64(nuisance_seed);
        let p = CollisionParams {
            mass_ratio: grid.value(0, rb),
            restitution: grid.value(1, eb),
            speed: nr.gen_range(1.5..2.5),
            x_offset: nr.gen_range(-0.2..0.2),
        };
        let mut features = Vec::with_capacity(FRAMES * 2);
        for i in 0..FRAMES {
            let (a, b) = p.positions(i as f64 * FRAME_DT)?;
            features.push(a);
            features.push(b);
        }
        let (_, vb) = collision_velocities(p.mass_ratio, p.restitution, p.speed)?;
        scenes.push(Scene {
            id,
            features,
            frames: FRAMES,
            dims: 2,
            property_bins: vec![rb, eb],
            property_values: vec![p.mass_ratio, p.restitution],
            nuisance_seed,
            outcome: Some(vb.abs()),
        });
    }
    Ok(scenes)
}
