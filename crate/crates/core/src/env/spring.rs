use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cell_of, EnvError, PropertyGrid, Result, Scene};

/// Observation times of the four spring-mass frames.
pub const SPRING_TIMES: [f64; 4] = [0.0, 0.5, 1.0, 1.5];

const MASS: f64 = 1.0;

/// Position, velocity and acceleration of `x(t) = A e^{-gt} cos(wt)` for
/// unit mass, stiffness `k` and damping `b`.
pub fn spring_state(k: f64, b: f64, amplitude: f64, t: f64) -> (f64, f64, f64) {
    let gamma = b / (2.0 * MASS);
    let omega = (k / MASS - gamma * gamma).max(0.0).sqrt();
    let decay = amplitude * (-gamma * t).exp();
    let (s, c) = (omega * t).sin_cos();
    let x = decay * c;
    let v = decay * (-gamma * c - omega * s);
    let a = decay * ((gamma * gamma - omega * omega) * c + 2.0 * gamma * omega * s);
    (x, v, a)
}

/// Damped oscillator scenes: four frames of (position, velocity).
///
/// Scenes are spread round-robin over the 5x5 grid of (stiffness, damping);
/// the amplitude is a per-scene nuisance drawn from U[0.5, 1.5].
pub fn gen_spring_mass<R: Rng + ?Sized>(n_scenes: usize, grid: &PropertyGrid, rng: &mut R) -> Result<Vec<Scene>> {
    if grid.len() != 2 {
        return Err(EnvError::InvalidGrid("spring-mass needs (stiffness, damping)".into()));
    }
    let bins = grid.bins_per_property();
    for (i, k) in grid.properties()[0].bins.iter().enumerate() {
        for (j, b) in grid.properties()[1].bins.iter().enumerate() {
            let gamma = b / (2.0 * MASS);
            if k / MASS < gamma * gamma {
                return Err(EnvError::ImaginaryFrequency { cell: vec![i, j] });
            }
        }
    }
    let mut scenes = Vec::with_capacity(n_scenes);
    for id in 0..n_scenes {
        let (kb, bb) = cell_of(id, bins);
        let k = grid.value(0, kb);
        let b = grid.value(1, bb);
        let nuisance_seed: u64 = rng.gen();
        let amplitude = ChaCha8Rng::seed_from_u64(nuisance_seed).gen_range(0.5..1.5);
        let mut features = Vec::with_capacity(SPRING_TIMES.len() * 2);
        for &t in &SPRING_TIMES {
            let (x, v, _) = spring_state(k, b, amplitude, t);
            features.push(x);
            features.push(v);
        }
        scenes.push(Scene {
            id,
            features,
            frames: SPRING_TIMES.len(),
            dims: 2,
            property_bins: vec![kb, bb],
            property_values: vec![k, b],
            nuisance_seed,
            outcome: None,
        });
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rk4(k: f64, b: f64, x0: f64, v0: f64, t_end: f64, dt: f64) -> (f64, f64) {
        let f = |x: f64, v: f64| (v, (-k * x - b * v) / MASS);
        let (mut x, mut v) = (x0, v0);
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            let (k1x, k1v) = f(x, v);
            let (k2x, k2v) = f(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v);
            let (k3x, k3v) = f(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v);
            let (k4x, k4v) = f(x + dt * k3x, v + dt * k3v);
            x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        (x, v)
    }

    #[test]
    fn initial_frame_is_amplitude_and_decay() {
        let scenes = gen_spring_mass(50, &PropertyGrid::spring_mass(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for s in &scenes {
            let gamma = s.property_values[1] / 2.0;
            let a = s.frame(0)[0];
            assert!((0.5..1.5).contains(&a));
            assert!((s.frame(0)[1] + gamma * a).abs() < 1e-15);
        }
    }

    #[test]
    fn critical_boundary_is_pure_decay() {
        for t in [0.0, 0.3, 1.0, 1.5] {
            let (x, _, _) = spring_state(1.0, 2.0, 1.3, t);
            assert!((x - 1.3 * (-t as f64).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_rk4_integration() {
        let (x, v) = rk4(10.0, 0.1, 1.0, -0.05, 0.5, 1e-4);
        let (xc, vc, _) = spring_state(10.0, 0.1, 1.0, 0.5);
        assert!((x - xc).abs() < 1e-6, "{x} vs {xc}");
        assert!((v - vc).abs() < 1e-6);
    }

    #[test]
    fn ode_residual_vanishes_on_grid() {
        let grid = PropertyGrid::spring_mass();
        for &k in &grid.properties()[0].bins {
            for &b in &grid.properties()[1].bins {
                for &t in &SPRING_TIMES {
                    let (x, v, a) = spring_state(k, b, 1.1, t);
                    assert!((a + b * v + k * x).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_overdamped_cells() {
        let grid = PropertyGrid::new(vec![("k".into(), vec![0.5, 1.0]), ("b".into(), vec![0.1, 2.0])]).unwrap();
        let err = gen_spring_mass(4, &grid, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, EnvError::ImaginaryFrequency { cell: vec![0, 1] });
    }

    #[test]
    fn bins_round_trip_and_generation_is_pure() {
        let grid = PropertyGrid::spring_mass();
        let a = gen_spring_mass(300, &grid, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = gen_spring_mass(300, &grid, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert_eq!(grid.values(&s.property_bins), s.property_values);
        }
    }
}
