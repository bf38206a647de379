use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::drone::{wrap_angle, DroneState};
use crate::geometry::{PowerlineSpec, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    pub points_per_cable: usize,
    pub noise_sigma: f64,
    /// Mean number of clutter returns per scan.
    pub clutter_rate: f64,
    pub max_range: f64,
    /// Half-length of cable seen by the beam, along the span.
    pub along_half_span: f64,
    /// Concentration of the von Mises error on the line-direction estimate.
    pub direction_kappa: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            points_per_cable: 20,
            noise_sigma: 0.05,
            clutter_rate: 0.5,
            max_range: 10.0,
            along_half_span: 1.0,
            direction_kappa: 1.0e4,
        }
    }
}

/// One radar frame. Points and line direction are in the body frame
/// (rotated by the drone yaw, centred on the drone).
#[derive(Debug, Clone, PartialEq)]
pub struct RadarScan {
    pub points: Vec<Vec3>,
    pub direction: Vec3,
}

pub fn rotate_z(v: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

impl RadarScan {
    /// Points and direction rotated back to a level, world-aligned frame
    /// centred on the drone.
    pub fn level_frame(&self, yaw: f64) -> (Vec<Vec3>, Vec3) {
        let pts = self.points.iter().map(|p| rotate_z(p, yaw)).collect();
        (pts, rotate_z(&self.direction, yaw))
    }
}

/// Sample from a von Mises distribution (Best and Fisher rejection scheme).
pub fn sample_von_mises<R: Rng + ?Sized>(rng: &mut R, mu: f64, kappa: f64) -> f64 {
    if kappa < 1e-8 {
        return rng.gen_range(-PI..PI);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = if u3 > 0.5 { f.clamp(-1.0, 1.0).acos() } else { -f.clamp(-1.0, 1.0).acos() };
            return wrap_angle(mu + theta);
        }
    }
}

/// Synthesize a radar frame from ground truth.
pub fn synth_scan<R: Rng + ?Sized>(world: &PowerlineSpec, drone: &DroneState, cfg: &RadarConfig, rng: &mut R) -> RadarScan {
    let noise = Normal::new(0.0, cfg.noise_sigma.max(1e-12)).expect("finite sigma");
    let mut points = Vec::with_capacity(world.cables.len() * cfg.points_per_cable + 4);
    let mut nearest_dir = None;
    let mut nearest_d = f64::INFINITY;
    for cable in &world.cables {
        let (_, s_star, d) = cable.nearest_point(&drone.position);
        if d > cfg.max_range {
            continue;
        }
        if d < nearest_d {
            nearest_d = d;
            nearest_dir = Some(cable.span_direction());
        }
        let ds = cfg.along_half_span / cable.length();
        let lo = (s_star - ds).max(0.0);
        let hi = (s_star + ds).min(1.0);
        for _ in 0..cfg.points_per_cable {
            let s = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let p = cable.point(s).expect("s in range");
            let n = Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            points.push(rotate_z(&(p + n - drone.position), -drone.yaw));
        }
    }
    if cfg.clutter_rate > 0.0 {
        let count = Poisson::new(cfg.clutter_rate).map(|p| p.sample(rng) as usize).unwrap_or(0);
        for _ in 0..count {
            let rel = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0));
            points.push(rotate_z(&rel, -drone.yaw));
        }
    }
    let true_dir = nearest_dir.unwrap_or_else(|| {
        world.cables.first().map(|c| c.span_direction()).unwrap_or(Vec3::new(0.0, 1.0, 0.0))
    });
    let err = sample_von_mises(rng, 0.0, cfg.direction_kappa);
    let direction = rotate_z(&rotate_z(&true_dir, err), -drone.yaw);
    RadarScan { points, direction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn von_mises_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_von_mises(&mut rng, 0.0, 1.0e4)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-3);
        assert!((var.sqrt() - 0.01).abs() < 5e-4, "std {}", var.sqrt());
    }

    #[test]
    fn rotate_round_trip() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        let r = rotate_z(&rotate_z(&v, 0.7), -0.7);
        assert!((r - v).norm() < 1e-12);
    }
}
