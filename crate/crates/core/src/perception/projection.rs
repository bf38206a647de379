use nalgebra::Vector2;

use crate::error::Result;
use crate::geometry::{cross_section_basis, Vec3};

pub type Vec2 = Vector2<f64>;

/// Project level-frame points onto the plane normal to `direction`. The first
/// coordinate is horizontal, the second points up.
pub fn project_to_cross_section(points: &[Vec3], direction: &Vec3) -> Result<Vec<Vec2>> {
    let (u, v) = cross_section_basis(direction)?;
    Ok(points.iter().map(|p| Vec2::new(p.dot(&u), p.dot(&v))).collect())
}

/// A clustered return used as one tracker measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub position: Vec2,
    pub count: usize,
}

/// Greedy leader clustering; clusters smaller than `min_points` are dropped
/// as clutter.
pub fn cluster_points(points: &[Vec2], radius: f64, min_points: usize) -> Vec<Measurement> {
    let mut sums: Vec<(Vec2, usize)> = Vec::new();
    for p in points {
        let mut best = None;
        let mut best_d = radius;
        for (i, (s, n)) in sums.iter().enumerate() {
            let d = (s / *n as f64 - p).norm();
            if d <= best_d {
                best_d = d;
                best = Some(i);
            }
        }
        match best {
            Some(i) => {
                sums[i].0 += p;
                sums[i].1 += 1;
            }
            None => sums.push((*p, 1)),
        }
    }
    sums.into_iter()
        .filter(|(_, n)| *n >= min_points)
        .map(|(s, n)| Measurement { position: s / n as f64, count: n })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_along_y() {
        let pts = project_to_cross_section(&[Vec3::new(1.0, 5.0, 2.0)], &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((pts[0] - Vec2::new(1.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn projection_rejects_vertical_direction() {
        assert!(project_to_cross_section(&[Vec3::zeros()], &Vec3::new(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn clusters_separate_and_drop_singletons() {
        let mut pts = vec![];
        for i in 0..10 {
            let e = i as f64 * 0.01;
            pts.push(Vec2::new(-1.5 + e, 1.5));
            pts.push(Vec2::new(e, 1.5));
        }
        pts.push(Vec2::new(5.0, 5.0));
        let c = cluster_points(&pts, 0.3, 3);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|m| m.count == 10));
    }
}
