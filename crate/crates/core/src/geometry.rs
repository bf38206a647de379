use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type Vec3 = Vector3<f64>;

pub fn up() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// A single conductor modelled as a parabolic sag between two endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableSpec {
    pub endpoint_a: Vec3,
    pub endpoint_b: Vec3,
    /// Vertical sag at mid-span in metres (>= 0).
    pub sag: f64,
    pub phase_id: usize,
}

impl CableSpec {
    pub fn validate(&self) -> Result<()> {
        if (self.endpoint_b - self.endpoint_a).norm() < 1e-9 {
            return Err(SimError::DegenerateCable);
        }
        if !(self.sag >= 0.0 && self.sag.is_finite()) {
            return Err(SimError::Config(format!("cable sag {} must be >= 0", self.sag)));
        }
        Ok(())
    }

    pub fn point(&self, s: f64) -> Result<Vec3> {
        if !(0.0..=1.0).contains(&s) {
            return Err(SimError::ParameterOutOfRange(s));
        }
        Ok(self.point_unchecked(s))
    }

    fn point_unchecked(&self, s: f64) -> Vec3 {
        let mut p = self.endpoint_a + (self.endpoint_b - self.endpoint_a) * s;
        let u = 2.0 * s - 1.0;
        p.z -= self.sag * (1.0 - u * u);
        p
    }

    /// Unit tangent of the cable at parameter s.
    pub fn tangent(&self, s: f64) -> Vec3 {
        let mut d = self.endpoint_b - self.endpoint_a;
        let u = 2.0 * s.clamp(0.0, 1.0) - 1.0;
        d.z += self.sag * 4.0 * u;
        d.normalize()
    }

    /// Horizontal unit direction of the span.
    pub fn span_direction(&self) -> Vec3 {
        let mut d = self.endpoint_b - self.endpoint_a;
        d.z = 0.0;
        d.normalize()
    }

    pub fn length(&self) -> f64 {
        (self.endpoint_b - self.endpoint_a).norm()
    }

    /// Closest point on the cable to `p`; returns (point, s, distance).
    pub fn nearest_point(&self, p: &Vec3) -> (Vec3, f64, f64) {
        const COARSE: usize = 256;
        let dist2 = |s: f64| (self.point_unchecked(s) - p).norm_squared();
        let mut best_i = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..=COARSE {
            let d = dist2(i as f64 / COARSE as f64);
            if d < best_d {
                best_d = d;
                best_i = i;
            }
        }
        let mut lo = (best_i.saturating_sub(1)) as f64 / COARSE as f64;
        let mut hi = ((best_i + 1).min(COARSE)) as f64 / COARSE as f64;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = dist2(x1);
        let mut f2 = dist2(x2);
        while hi - lo > 1e-12 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = dist2(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = dist2(x2);
            }
        }
        let mut s = 0.5 * (lo + hi);
        for cand in [0.0, 1.0] {
            if dist2(cand) < dist2(s) {
                s = cand;
            }
        }
        let q = self.point_unchecked(s);
        (q, s, (q - p).norm())
    }
}

/// Piecewise-constant RMS current schedule: each segment applies from its
/// start time until the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSegment {
    pub start_s: f64,
    pub rms_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerlineSpec {
    pub cables: Vec<CableSpec>,
    pub line_frequency: f64,
    pub current_profile: Vec<CurrentSegment>,
}

impl Default for PowerlineSpec {
    fn default() -> Self {
        Self::three_phase(10.0, 1.5, 100.0, 0.5, 288.0)
    }
}

impl PowerlineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cables.is_empty() {
            return Err(SimError::Config("powerline has no cables".into()));
        }
        for c in &self.cables {
            c.validate()?;
        }
        if !(self.line_frequency > 0.0 && self.line_frequency.is_finite()) {
            return Err(SimError::Config("line_frequency must be positive".into()));
        }
        if self.current_profile.is_empty() {
            return Err(SimError::Config("current_profile is empty".into()));
        }
        for w in self.current_profile.windows(2) {
            if w[1].start_s <= w[0].start_s {
                return Err(SimError::Config("current_profile start times must increase".into()));
            }
        }
        if self.current_profile.iter().any(|s| !(s.rms_a >= 0.0 && s.rms_a.is_finite())) {
            return Err(SimError::Config("current_profile rms values must be >= 0".into()));
        }
        Ok(())
    }

    pub fn current_rms(&self, t: f64) -> f64 {
        let mut rms = self.current_profile.first().map(|s| s.rms_a).unwrap_or(0.0);
        for seg in &self.current_profile {
            if seg.start_s <= t {
                rms = seg.rms_a;
            } else {
                break;
            }
        }
        rms
    }

    /// Three parallel conductors along +y, `spacing` apart, at `height`.
    pub fn three_phase(height: f64, spacing: f64, span: f64, sag: f64, rms_a: f64) -> Self {
        let cables = (0..3)
            .map(|i| {
                let x = (i as f64 - 1.0) * spacing;
                CableSpec {
                    endpoint_a: Vec3::new(x, 0.0, height),
                    endpoint_b: Vec3::new(x, span, height),
                    sag,
                    phase_id: i,
                }
            })
            .collect();
        Self {
            cables,
            line_frequency: 50.0,
            current_profile: vec![CurrentSegment { start_s: 0.0, rms_a }],
        }
    }
}

/// Orthonormal basis of the plane normal to `direction`: `u` is horizontal,
/// `v` is the component of world up orthogonal to the direction.
pub fn cross_section_basis(direction: &Vec3) -> Result<(Vec3, Vec3)> {
    let n = direction.norm();
    if n < 1e-12 {
        return Err(SimError::DirectionParallelToUp);
    }
    let d = direction / n;
    let v = up() - d * d.dot(&up());
    if v.norm() < 1e-9 {
        return Err(SimError::DirectionParallelToUp);
    }
    let v = v.normalize();
    let u = d.cross(&v).normalize();
    Ok((u, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cable() -> CableSpec {
        CableSpec {
            endpoint_a: Vec3::new(0.0, 0.0, 10.0),
            endpoint_b: Vec3::new(0.0, 100.0, 10.0),
            sag: 0.5,
            phase_id: 0,
        }
    }

    #[test]
    fn sag_at_midspan() {
        let p = cable().point(0.5).unwrap();
        assert_relative_eq!(p, Vec3::new(0.0, 50.0, 9.5), epsilon = 1e-12);
        assert_relative_eq!(cable().point(0.0).unwrap(), Vec3::new(0.0, 0.0, 10.0));
    }

    #[test]
    fn out_of_range_parameter() {
        assert!(matches!(cable().point(1.5), Err(SimError::ParameterOutOfRange(_))));
    }

    #[test]
    fn degenerate_cable_rejected() {
        let mut c = cable();
        c.endpoint_b = c.endpoint_a;
        assert_eq!(c.validate(), Err(SimError::DegenerateCable));
    }

    #[test]
    fn nearest_point_matches_dense_scan() {
        let c = cable();
        let p = Vec3::new(1.0, 31.0, 8.0);
        let (_, s, d) = c.nearest_point(&p);
        let mut best = (0.0, f64::INFINITY);
        for i in 0..=1_000_000 {
            let si = i as f64 / 1e6;
            let di = (c.point(si).unwrap() - p).norm();
            if di < best.1 {
                best = (si, di);
            }
        }
        assert!((s - best.0).abs() < 2e-6);
        assert!(d <= best.1 + 1e-9);
    }

    #[test]
    fn cross_section_of_y_axis() {
        let (u, v) = cross_section_basis(&Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let p = Vec3::new(1.0, 5.0, 2.0);
        assert_relative_eq!(p.dot(&u), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.dot(&v), 2.0, epsilon = 1e-12);
        assert!(cross_section_basis(&up()).is_err());
    }

    #[test]
    fn current_profile_lookup() {
        let mut pl = PowerlineSpec::three_phase(10.0, 1.5, 100.0, 0.0, 100.0);
        pl.current_profile.push(CurrentSegment { start_s: 10.0, rms_a: 300.0 });
        assert_eq!(pl.current_rms(0.0), 100.0);
        assert_eq!(pl.current_rms(9.99), 100.0);
        assert_eq!(pl.current_rms(10.0), 300.0);
        pl.validate().unwrap();
    }
}
