use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::projection::Vec2;

/// Cable track in the cross-section plane, relative to the drone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub position: Vec2,
    pub covariance: Matrix2<f64>,
    pub hits: u32,
    pub consecutive_misses: u32,
    pub confirmed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateFailure {
    pub mahalanobis2: f64,
}

/// Constant-position prediction. `shift` is the drone ego-motion projected
/// on the plane; the cable moves by its negative in the drone frame.
pub fn kf_predict(track: &Track, shift: &Vec2, q: &Matrix2<f64>) -> Track {
    let mut t = track.clone();
    t.position -= shift;
    t.covariance += q;
    t
}

pub fn mahalanobis2(track: &Track, z: &Vec2, r: &Matrix2<f64>) -> f64 {
    let s = track.covariance + r;
    let y = z - track.position;
    match s.try_inverse() {
        Some(si) => (y.transpose() * si * y)[(0, 0)],
        None => f64::INFINITY,
    }
}

/// Gated measurement update in Joseph form.
pub fn kf_update(track: &Track, z: &Vec2, r: &Matrix2<f64>, gate: f64) -> Result<Track, GateFailure> {
    let d2 = mahalanobis2(track, z, r);
    if !(d2 <= gate) {
        return Err(GateFailure { mahalanobis2: d2 });
    }
    let p = track.covariance;
    let s = p + r;
    let k = p * s.try_inverse().ok_or(GateFailure { mahalanobis2: d2 })?;
    let y = z - track.position;
    let ik = Matrix2::identity() - k;
    let mut t = track.clone();
    t.position += k * y;
    let pn = ik * p * ik.transpose() + k * r * k.transpose();
    t.covariance = 0.5 * (pn + pn.transpose());
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn track(p: Vec2, var: f64) -> Track {
        Track {
            id: 0,
            position: p,
            covariance: Matrix2::identity() * var,
            hits: 0,
            consecutive_misses: 0,
            confirmed: false,
        }
    }

    #[test]
    fn unit_covariances_give_midpoint() {
        let t = track(Vec2::zeros(), 1.0);
        let u = kf_update(&t, &Vec2::new(2.0, 0.0), &Matrix2::identity(), 9.21).unwrap();
        assert_relative_eq!(u.position, Vec2::new(1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(u.covariance, Matrix2::identity() * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gate_rejects_outliers() {
        let t = track(Vec2::zeros(), 0.01);
        let e = kf_update(&t, &Vec2::new(1.0, 0.0), &(Matrix2::identity() * 0.01), 9.21).unwrap_err();
        assert!(e.mahalanobis2 > 9.21);
    }

    #[test]
    fn limits_of_measurement_noise() {
        let t = track(Vec2::zeros(), 1.0);
        let z = Vec2::new(0.5, -0.5);
        let vague = kf_update(&t, &z, &(Matrix2::identity() * 1e12), 9.21).unwrap();
        assert!(vague.position.norm() < 1e-9);
        let t = track(Vec2::zeros(), 1e12);
        let sharp = kf_update(&t, &z, &(Matrix2::identity() * 1.0), 9.21).unwrap();
        assert!((sharp.position - z).norm() < 1e-9);
    }

    #[test]
    fn predict_shifts_opposite_to_motion() {
        let t = track(Vec2::new(0.0, 1.5), 0.01);
        let p = kf_predict(&t, &Vec2::new(0.2, 0.0), &(Matrix2::identity() * 1e-4));
        assert_relative_eq!(p.position, Vec2::new(-0.2, 1.5), epsilon = 1e-12);
        assert_relative_eq!(p.covariance[(0, 0)], 0.0101, epsilon = 1e-12);
    }
}
