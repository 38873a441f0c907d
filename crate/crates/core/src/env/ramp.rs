use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cell_of, EnvError, PropertyGrid, Result, Scene};

pub const RAMP_ANGLE_DEG: f64 = 70.0;
pub const GRAVITY: f64 = 9.8;
const FRAMES: usize = 8;
const FRAME_DT: f64 = 0.25;
/// Bounces slower than this come to rest.
pub const REST_SPEED: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampParams {
    pub elasticity: f64,
    pub friction: f64,
    /// Spawn height at the top of the ramp.
    pub height: f64,
    pub x_offset: f64,
}

impl RampParams {
    fn angle() -> (f64, f64) {
        RAMP_ANGLE_DEG.to_radians().sin_cos()
    }

    pub fn slide_acceleration(&self) -> f64 {
        let (s, c) = Self::angle();
        GRAVITY * (s - self.friction * c)
    }

    pub fn ramp_length(&self) -> f64 {
        self.height / Self::angle().0
    }

    pub fn slide_time(&self) -> f64 {
        (2.0 * self.ramp_length() / self.slide_acceleration()).sqrt()
    }
}

/// `(x, y, vx, vy)` at time `t`.
///
/// The ball slides from rest down the incline, reaches the ground at the
/// ramp foot and from then on keeps its horizontal speed while bouncing with
/// vertical restitution `elasticity`.
pub fn ramp_state(p: &RampParams, t: f64) -> [f64; 4] {
    let (sin, cos) = RampParams::angle();
    let a = p.slide_acceleration();
    let t1 = p.slide_time();
    if t < t1 {
        let d = 0.5 * a * t * t;
        return [p.x_offset + d * cos, p.height - d * sin, a * t * cos, -a * t * sin];
    }
    let v1 = a * t1;
    let vx = v1 * cos;
    let x = p.x_offset + p.height / sin * cos + vx * (t - t1);
    let mut vy0 = p.elasticity * v1 * sin;
    let mut tau = t - t1;
    loop {
        if vy0 < REST_SPEED {
            return [x, 0.0, vx, 0.0];
        }
        let flight = 2.0 * vy0 / GRAVITY;
        if tau < flight {
            return [x, vy0 * tau - 0.5 * GRAVITY * tau * tau, vx, vy0 - GRAVITY * tau];
        }
        tau -= flight;
        vy0 *= p.elasticity;
    }
}

/// Ramp scenes over (elasticity, friction): eight frames of (x, y, vx, vy).
pub fn gen_ramp_trajectories<R: Rng + ?Sized>(n_scenes: usize, grid: &PropertyGrid, rng: &mut R) -> Result<Vec<Scene>> {
    if grid.len() != 2 {
        return Err(EnvError::InvalidGrid("ramp needs (elasticity, friction)".into()));
    }
    let (sin, cos) = RampParams::angle();
    for &mu in &grid.properties()[1].bins {
        if mu * cos >= sin {
            return Err(EnvError::InvalidParameter(format!("friction {mu} never slides at {RAMP_ANGLE_DEG} degrees")));
        }
    }
    let bins = grid.bins_per_property();
    let mut scenes = Vec::with_capacity(n_scenes);
    for id in 0..n_scenes {
        let (eb, fb) = cell_of(id, bins);
        let nuisance_seed: u64 = rng.gen();
        let mut nr = ChaCha8Rng::seed_from_u64(nuisance_seed);
        let p = RampParams {
            elasticity: grid.value(0, eb),
            friction: grid.value(1, fb),
            height: nr.gen_range(1.0..2.0),
            x_offset: nr.gen_range(-0.5..0.5),
        };
        let features = (0..FRAMES).flat_map(|i| ramp_state(&p, i as f64 * FRAME_DT)).collect();
        scenes.push(Scene {
            id,
            features,
            frames: FRAMES,
            dims: 4,
            property_bins: vec![eb, fb],
            property_values: vec![p.elasticity, p.friction],
            nuisance_seed,
            outcome: None,
        });
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    enum Phase {
        Slide { d: f64, u: f64 },
        Air { y: f64, vy: f64 },
        Rest,
    }

    /// Fixed-step simulator with exact constant-acceleration updates and
    /// contact events solved inside the step.
    fn simulate(p: &RampParams, times: &[f64], dt: f64) -> Vec<[f64; 4]> {
        let (sin, cos) = RampParams::angle();
        let a = p.slide_acceleration();
        let s_end = p.ramp_length();
        let mut phase = Phase::Slide { d: 0.0, u: 0.0 };
        let (mut x, mut vx) = (p.x_offset, 0.0);
        let mut now = 0.0;
        let mut out = Vec::new();
        for &target in times {
            while now < target - 1e-12 {
                let mut h = dt.min(target - now);
                now += h;
                while h > 0.0 {
                    phase = match phase {
                        Phase::Slide { d, u } => {
                            let nd = d + u * h + 0.5 * a * h * h;
                            if nd < s_end {
                                let nu = u + a * h;
                                x = p.x_offset + nd * cos;
                                vx = nu * cos;
                                h = 0.0;
                                Phase::Slide { d: nd, u: nu }
                            } else {
                                let tau = (-u + (u * u + 2.0 * a * (s_end - d)).sqrt()) / a;
                                let v1 = u + a * tau;
                                x = p.x_offset + s_end * cos;
                                vx = v1 * cos;
                                h -= tau;
                                let vy = p.elasticity * v1 * sin;
                                if vy < REST_SPEED { Phase::Rest } else { Phase::Air { y: 0.0, vy } }
                            }
                        }
                        Phase::Air { y, vy } => {
                            let ny = y + vy * h - 0.5 * GRAVITY * h * h;
                            if ny > 0.0 {
                                x += vx * h;
                                let nvy = vy - GRAVITY * h;
                                h = 0.0;
                                Phase::Air { y: ny, vy: nvy }
                            } else {
                                let tc = (vy + (vy * vy + 2.0 * GRAVITY * y).sqrt()) / GRAVITY;
                                let impact = vy - GRAVITY * tc;
                                x += vx * tc;
                                h -= tc;
                                let up = -p.elasticity * impact;
                                if up < REST_SPEED { Phase::Rest } else { Phase::Air { y: 0.0, vy: up } }
                            }
                        }
                        Phase::Rest => {
                            x += vx * h;
                            h = 0.0;
                            Phase::Rest
                        }
                    };
                }
            }
            out.push(match phase {
                Phase::Slide { d, u } => [p.x_offset + d * cos, p.height - d * sin, u * cos, -u * sin],
                Phase::Air { y, vy } => [x, y, vx, vy],
                Phase::Rest => [x, 0.0, vx, 0.0],
            });
        }
        out
    }

    #[test]
    fn inelastic_ball_stops_bouncing() {
        let p = RampParams { elasticity: 0.0, friction: 0.3, height: 1.5, x_offset: 0.0 };
        let t1 = p.slide_time();
        for dt in [0.0, 0.1, 0.5] {
            let s = ramp_state(&p, t1 + dt);
            assert_eq!(s[3], 0.0);
            assert_eq!(s[1], 0.0);
        }
    }

    #[test]
    fn frictionless_slide_is_gravity_component() {
        let p = RampParams { elasticity: 0.5, friction: 0.0, height: 1.0, x_offset: 0.0 };
        assert!((p.slide_acceleration() - GRAVITY * RAMP_ANGLE_DEG.to_radians().sin()).abs() < 1e-15);
    }

    #[test]
    fn matches_event_driven_simulation() {
        let grid = PropertyGrid::ramp();
        let scenes = gen_ramp_trajectories(50, &grid, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let times: Vec<f64> = (0..FRAMES).map(|i| i as f64 * FRAME_DT).collect();
        for s in &scenes {
            let mut nr = ChaCha8Rng::seed_from_u64(s.nuisance_seed);
            let p = RampParams {
                elasticity: s.property_values[0],
                friction: s.property_values[1],
                height: nr.gen_range(1.0..2.0),
                x_offset: nr.gen_range(-0.5..0.5),
            };
            let sim = simulate(&p, &times, 1e-3);
            for (t, frame) in sim.iter().enumerate() {
                for d in 0..4 {
                    let diff = (frame[d] - s.frame(t)[d]).abs();
                    assert!(diff < 1e-6, "scene {} frame {t} dim {d}: {diff}", s.id);
                }
            }
        }
    }
}
