pub mod kalman;
pub mod projection;
pub mod scan;
pub mod tracker;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::drone::DroneState;
use crate::error::Result;
use crate::geometry::{cross_section_basis, PowerlineSpec, Vec3};
use projection::{cluster_points, project_to_cross_section, Vec2};
use scan::{synth_scan, RadarConfig};
use tracker::{select_target_cable, TargetSelector, Tracker, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub radar: RadarConfig,
    pub tracker: TrackerConfig,
    pub cluster_radius: f64,
    pub cluster_min_points: usize,
    pub selector: TargetSelector,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            radar: RadarConfig::default(),
            tracker: TrackerConfig::default(),
            cluster_radius: 0.3,
            cluster_min_points: 3,
            selector: TargetSelector::Nearest,
        }
    }
}

/// Estimated landing target relative to the drone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub track_id: u64,
    /// Horizontal offset of the cable from the drone, across the span.
    pub lateral: f64,
    /// Height of the cable above the drone.
    pub vertical: f64,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub direction: Vec3,
}

impl TargetEstimate {
    pub fn cable_world(&self, drone_pos: &Vec3) -> Vec3 {
        drone_pos + self.u_axis * self.lateral + self.v_axis * self.vertical
    }

    pub fn yaw_for_alignment(&self) -> f64 {
        // Body y axis along the cable.
        (-self.direction.x).atan2(self.direction.y)
    }
}

/// Scan synthesis, projection, clustering and tracking for one drone.
#[derive(Debug, Clone)]
pub struct Perception {
    pub cfg: PerceptionConfig,
    pub tracker: Tracker,
    direction: Option<Vec3>,
    last_position: Option<Vec3>,
    locked: Option<u64>,
}

impl Perception {
    pub fn new(cfg: PerceptionConfig) -> Self {
        let tracker = Tracker::new(cfg.tracker.clone());
        Self { cfg, tracker, direction: None, last_position: None, locked: None }
    }

    /// Forget the previous pose so the next frame does not apply a stale
    /// ego-motion shift (used after long attached periods).
    pub fn reset_odometry(&mut self) {
        self.last_position = None;
    }

    /// Process one frame. `odometry` is the drone position as reported by the
    /// flight controller.
    pub fn process<R: Rng + ?Sized>(
        &mut self,
        world: &PowerlineSpec,
        drone: &DroneState,
        odometry: Vec3,
        rng: &mut R,
    ) -> Result<()> {
        let scan = synth_scan(world, drone, &self.cfg.radar, rng);
        let (pts, dir) = scan.level_frame(drone.yaw);
        let dir = match self.direction {
            Some(d) if d.dot(&dir) < 0.0 => -dir,
            _ => dir,
        };
        self.direction = Some(dir);
        let (u, v) = cross_section_basis(&dir)?;
        let delta = self.last_position.map(|p| odometry - p).unwrap_or_else(Vec3::zeros);
        self.last_position = Some(odometry);
        self.tracker.predict(&Vec2::new(delta.dot(&u), delta.dot(&v)));
        let projected = project_to_cross_section(&pts, &dir)?;
        let meas = cluster_points(&projected, self.cfg.cluster_radius, self.cfg.cluster_min_points);
        self.tracker.associate_and_manage(&meas, self.cfg.radar.noise_sigma);
        Ok(())
    }

    /// Current target. Once a track has been chosen it is kept while it
    /// exists so the landing does not hop between conductors.
    pub fn target(&mut self) -> Option<TargetEstimate> {
        let dir = self.direction?;
        let (u, v) = cross_section_basis(&dir).ok()?;
        let track = match self.locked.and_then(|id| self.tracker.get(id)).filter(|t| t.confirmed) {
            Some(t) => t.clone(),
            None => {
                let t = select_target_cable(&self.tracker.tracks, self.cfg.selector)?.clone();
                self.locked = Some(t.id);
                t
            }
        };
        Some(TargetEstimate {
            track_id: track.id,
            lateral: track.position.x,
            vertical: track.position.y,
            u_axis: u,
            v_axis: v,
            direction: dir,
        })
    }

    pub fn unlock(&mut self) {
        self.locked = None;
    }

    pub fn confirmed_count(&self) -> usize {
        self.tracker.confirmed().count()
    }
}
