use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::kalman::{kf_predict, kf_update, mahalanobis2, Track};
use super::projection::{Measurement, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Chi-square gate on the squared Mahalanobis distance (2 dof).
    pub gate: f64,
    pub confirm_hits: u32,
    pub delete_misses: u32,
    /// Process noise standard deviation per step, metres.
    pub process_sigma: f64,
    /// Initial position standard deviation of a new track.
    pub init_sigma: f64,
    /// Floor added to the per-cluster measurement variance.
    pub measurement_floor: f64,
    /// Tracks closer than this describe the same conductor; no track is born
    /// this close to an existing one and duplicates are merged.
    pub merge_distance: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate: 9.21,
            confirm_hits: 5,
            delete_misses: 10,
            process_sigma: 0.01,
            init_sigma: 0.2,
            measurement_floor: 0.005,
            merge_distance: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSelector {
    Nearest,
    /// Index into confirmed tracks sorted left to right.
    LateralIndex(usize),
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self { cfg, tracks: Vec::new(), next_id: 1 }
    }

    pub fn predict(&mut self, shift: &Vec2) {
        let q = Matrix2::identity() * self.cfg.process_sigma.powi(2);
        for t in &mut self.tracks {
            *t = kf_predict(t, shift, &q);
        }
    }

    fn measurement_cov(&self, m: &Measurement, sigma: f64) -> Matrix2<f64> {
        Matrix2::identity() * (sigma * sigma / m.count.max(1) as f64 + self.cfg.measurement_floor.powi(2))
    }

    /// Greedy nearest-neighbour association in order of increasing
    /// Mahalanobis distance, followed by track birth and deletion.
    pub fn associate_and_manage(&mut self, measurements: &[Measurement], sigma: f64) {
        let mut pairs = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            for (mi, m) in measurements.iter().enumerate() {
                let d2 = mahalanobis2(t, &m.position, &self.measurement_cov(m, sigma));
                if d2 <= self.cfg.gate {
                    pairs.push((d2, ti, mi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut t_used = vec![false; self.tracks.len()];
        let mut m_used = vec![false; measurements.len()];
        for (_, ti, mi) in pairs {
            if t_used[ti] || m_used[mi] {
                continue;
            }
            let r = self.measurement_cov(&measurements[mi], sigma);
            if let Ok(mut t) = kf_update(&self.tracks[ti], &measurements[mi].position, &r, self.cfg.gate) {
                t.hits += 1;
                t.consecutive_misses = 0;
                if t.hits >= self.cfg.confirm_hits {
                    t.confirmed = true;
                }
                self.tracks[ti] = t;
                t_used[ti] = true;
                m_used[mi] = true;
            }
        }
        for (ti, used) in t_used.iter().enumerate() {
            if !used {
                self.tracks[ti].consecutive_misses += 1;
            }
        }
        let k = self.cfg.delete_misses;
        self.tracks.retain(|t| t.consecutive_misses < k);
        self.merge_duplicates();
        for (mi, m) in measurements.iter().enumerate() {
            if m_used[mi] || self.tracks.iter().any(|t| (t.position - m.position).norm() < self.cfg.merge_distance) {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                position: m.position,
                covariance: Matrix2::identity() * self.cfg.init_sigma.powi(2),
                hits: 1,
                consecutive_misses: 0,
                confirmed: self.cfg.confirm_hits <= 1,
            });
        }
    }

    /// Drop the younger of any two tracks within `merge_distance`.
    fn merge_duplicates(&mut self) {
        let d = self.cfg.merge_distance;
        let mut i = 0;
        while i < self.tracks.len() {
            let dup = (0..self.tracks.len()).find(|&j| {
                j != i
                    && (self.tracks[i].position - self.tracks[j].position).norm() < d
                    && (self.tracks[j].hits, std::cmp::Reverse(self.tracks[j].id))
                        > (self.tracks[i].hits, std::cmp::Reverse(self.tracks[i].id))
            });
            if dup.is_some() {
                self.tracks.remove(i);
            } else {
                i += 1;
            }
        }
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.confirmed)
    }

    pub fn get(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }
}

/// Pick the landing target among confirmed tracks.
pub fn select_target_cable<'a>(tracks: &'a [Track], selector: TargetSelector) -> Option<&'a Track> {
    let mut confirmed: Vec<&Track> = tracks.iter().filter(|t| t.confirmed).collect();
    match selector {
        TargetSelector::Nearest => confirmed.into_iter().min_by(|a, b| {
            a.position.norm().total_cmp(&b.position.norm()).then(a.id.cmp(&b.id))
        }),
        TargetSelector::LateralIndex(i) => {
            confirmed.sort_by(|a, b| a.position.x.total_cmp(&b.position.x).then(a.id.cmp(&b.id)));
            confirmed.get(i).copied()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(x: f64, y: f64) -> Measurement {
        Measurement { position: Vec2::new(x, y), count: 20 }
    }

    #[test]
    fn confirms_after_m_hits_and_deletes_after_k_misses() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for i in 0..5 {
            tr.predict(&Vec2::zeros());
            tr.associate_and_manage(&[meas(0.0, 1.5)], 0.05);
            assert_eq!(tr.confirmed().count(), usize::from(i == 4));
        }
        for i in 0..10 {
            tr.predict(&Vec2::zeros());
            tr.associate_and_manage(&[], 0.05);
            assert_eq!(tr.tracks.len(), usize::from(i < 9));
        }
    }

    #[test]
    fn nearest_and_index_selection() {
        let mut tr = Tracker::new(TrackerConfig { confirm_hits: 1, ..Default::default() });
        tr.associate_and_manage(&[meas(-1.5, 1.5), meas(0.1, 1.5), meas(1.5, 1.5)], 0.05);
        let near = select_target_cable(&tr.tracks, TargetSelector::Nearest).unwrap();
        assert!((near.position.x - 0.1).abs() < 1e-12);
        let left = select_target_cable(&tr.tracks, TargetSelector::LateralIndex(0)).unwrap();
        assert!((left.position.x + 1.5).abs() < 1e-12);
        assert!(select_target_cable(&tr.tracks, TargetSelector::LateralIndex(3)).is_none());
    }

    #[test]
    fn no_duplicate_track_on_one_conductor() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for _ in 0..8 {
            tr.predict(&Vec2::zeros());
            tr.associate_and_manage(&[meas(0.0, 1.5)], 0.05);
        }
        // An outlier outside the gate but on the same conductor.
        tr.predict(&Vec2::zeros());
        tr.associate_and_manage(&[meas(0.06, 1.5)], 0.05);
        assert_eq!(tr.tracks.len(), 1);
        // Two tracks that drift together collapse onto the older one.
        tr.tracks.push(Track { id: 99, ..tr.tracks[0].clone() });
        tr.tracks[1].hits = 2;
        tr.predict(&Vec2::zeros());
        tr.associate_and_manage(&[meas(0.0, 1.5)], 0.05);
        assert_eq!(tr.tracks.len(), 1);
        assert_ne!(tr.tracks[0].id, 99);
    }
}
