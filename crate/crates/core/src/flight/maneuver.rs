use serde::{Deserialize, Serialize};

use crate::drone::{wrap_angle, DroneState};
use crate::error::{Result, SimError};
use crate::geometry::{up, Vec3};
use crate::gripper::GripperState;
use crate::mission::ManeuverStatus;
use crate::mmc::{GripperStatus, MmcCommand};
use crate::perception::TargetEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
}

impl Setpoint {
    pub fn hold(position: Vec3, yaw: f64) -> Self {
        Self { position, velocity: Vec3::zeros(), yaw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandingConfig {
    /// Distance below the cable where each attempt starts.
    pub staging_offset: f64,
    pub ascent_speed: f64,
    /// Abort when the tracked lateral error exceeds this during the ascent.
    pub safety_margin: f64,
    /// Intentional lateral offset of the approach (testing hook).
    pub lateral_offset: f64,
    pub settle_time: f64,
    pub staging_tolerance: f64,
    /// Abort when the reference climbs this far past the closing height.
    pub overshoot: f64,
    pub track_loss_timeout: f64,
    pub max_attempts: Option<u32>,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            staging_offset: 1.5,
            ascent_speed: 0.5,
            safety_margin: 0.15,
            lateral_offset: 0.0,
            settle_time: 1.0,
            staging_tolerance: 0.05,
            overshoot: 0.3,
            track_loss_timeout: 1.0,
            max_attempts: None,
        }
    }
}

impl LandingConfig {
    pub fn validate(&self, max_misalignment: f64) -> Result<()> {
        if !(self.safety_margin > 0.0 && self.safety_margin < max_misalignment) {
            return Err(SimError::Config(format!(
                "safety_margin must lie in (0, {max_misalignment})"
            )));
        }
        if !(self.staging_offset > 0.0 && self.ascent_speed > 0.0 && self.overshoot > 0.0) {
            return Err(SimError::Config("landing offsets and speeds must be positive".into()));
        }
        if self.max_attempts == Some(0) {
            return Err(SimError::Config("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TakeoffConfig {
    pub spool_time: f64,
    /// Distance below the cable to settle at after leaving it.
    pub offset_below: f64,
    pub tolerance: f64,
}

impl Default for TakeoffConfig {
    fn default() -> Self {
        Self { spool_time: 1.0, offset_below: 1.5, tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    Hover,
    Landing,
    Takeoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverPhase {
    Holding,
    Staging,
    Ascending,
    Captured,
    Arming,
    Releasing,
    Descending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManeuverEvent {
    Phase { phase: ManeuverPhase },
    Aborted { reason: String, attempt: u32 },
    Succeeded,
    Failed { reason: String },
    Refused { reason: String },
}

/// Everything a maneuver may look at during one flight step.
#[derive(Debug, Clone)]
pub struct ManeuverInput {
    pub dt: f64,
    pub drone: DroneState,
    pub target: Option<TargetEstimate>,
    pub mechanism: GripperState,
    pub in_guides: bool,
    pub closed_offset: f64,
    pub mmc_status: GripperStatus,
    /// MMC finished opening and the mechanism may be released.
    pub mmc_released: bool,
    pub holding_force: f64,
    pub weight: f64,
    pub thrust_available: f64,
    pub can_lift_off: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ManeuverOutput {
    pub setpoint: Option<Setpoint>,
    pub mmc_command: Option<MmcCommand>,
    pub arm: Option<bool>,
    /// Release the mechanism and detach from the cable.
    pub detach: bool,
    pub events: Vec<ManeuverEvent>,
}

#[derive(Debug, Clone)]
pub struct Hover {
    pub anchor: Vec3,
    pub yaw: f64,
}

#[derive(Debug, Clone)]
pub struct Landing {
    cfg: LandingConfig,
    phase: ManeuverPhase,
    aborts: u32,
    attempts: u32,
    anchor: Option<Vec3>,
    depth_ref: f64,
    settled: f64,
    lost: f64,
    last_sp: Option<Setpoint>,
    close_sent: bool,
    status: ManeuverStatus,
}

impl Landing {
    pub fn new(cfg: LandingConfig) -> Self {
        Self {
            depth_ref: cfg.staging_offset,
            cfg,
            phase: ManeuverPhase::Staging,
            aborts: 0,
            attempts: 0,
            anchor: None,
            settled: 0.0,
            lost: 0.0,
            last_sp: None,
            close_sent: false,
            status: ManeuverStatus::Running,
        }
    }

    pub fn aborts(&self) -> u32 {
        self.aborts
    }

    fn finish(&mut self, out: &mut ManeuverOutput, status: ManeuverStatus) {
        let ev = match &status {
            ManeuverStatus::Succeeded => ManeuverEvent::Succeeded,
            ManeuverStatus::Failed(r) => ManeuverEvent::Failed { reason: r.clone() },
            ManeuverStatus::Refused(r) => ManeuverEvent::Refused { reason: r.clone() },
            ManeuverStatus::Running => return,
        };
        out.events.push(ev);
        self.status = status;
        self.phase = ManeuverPhase::Done;
    }

    fn set_phase(&mut self, out: &mut ManeuverOutput, phase: ManeuverPhase) {
        self.phase = phase;
        out.events.push(ManeuverEvent::Phase { phase });
    }

    fn abort(&mut self, out: &mut ManeuverOutput, reason: &str) {
        self.aborts += 1;
        self.attempts += 1;
        out.events.push(ManeuverEvent::Aborted { reason: reason.into(), attempt: self.attempts });
        if self.cfg.max_attempts.is_some_and(|m| self.attempts >= m) {
            self.finish(out, ManeuverStatus::Failed(format!("gave up after {} attempts", self.attempts)));
            return;
        }
        self.settled = 0.0;
        self.depth_ref = self.cfg.staging_offset;
        self.set_phase(out, ManeuverPhase::Staging);
    }

    /// Reference `depth` below the cable, shifted by the lateral offset and
    /// pinned to the along-span anchor.
    fn reference(&self, inp: &ManeuverInput, tgt: &TargetEstimate, depth: f64) -> Vec3 {
        let cable = tgt.cable_world(&inp.drone.position);
        let mut r = cable - tgt.v_axis * depth - tgt.u_axis * self.cfg.lateral_offset;
        if let Some(a) = self.anchor {
            r += tgt.direction * tgt.direction.dot(&(a - r));
        }
        r
    }

    pub fn tick(&mut self, inp: &ManeuverInput) -> ManeuverOutput {
        let mut out = ManeuverOutput::default();
        if self.status != ManeuverStatus::Running {
            return out;
        }
        if self.phase == ManeuverPhase::Ascending && inp.mechanism == GripperState::Closed {
            self.set_phase(&mut out, ManeuverPhase::Captured);
        }
        if self.phase == ManeuverPhase::Captured {
            if !self.close_sent {
                out.mmc_command = Some(MmcCommand::Closed);
                self.close_sent = true;
            } else if inp.mmc_status == GripperStatus::Closed && inp.holding_force >= inp.weight {
                out.arm = Some(false);
                self.finish(&mut out, ManeuverStatus::Succeeded);
            }
            return out;
        }
        let Some(tgt) = inp.target else {
            self.lost += inp.dt;
            if self.lost > self.cfg.track_loss_timeout {
                self.finish(&mut out, ManeuverStatus::Failed("target track lost".into()));
            }
            let hold = *self.last_sp.get_or_insert(Setpoint::hold(inp.drone.position, inp.drone.yaw));
            out.setpoint = Some(Setpoint { velocity: Vec3::zeros(), ..hold });
            return out;
        };
        self.lost = 0.0;
        self.anchor.get_or_insert(inp.drone.position);
        let yaw = tgt.yaw_for_alignment();
        match self.phase {
            ManeuverPhase::Staging => {
                let r = self.reference(inp, &tgt, self.cfg.staging_offset);
                let sp = Setpoint::hold(r, yaw);
                let ok = (r - inp.drone.position).norm() < self.cfg.staging_tolerance
                    && inp.drone.velocity.norm() < 0.1
                    && wrap_angle(yaw - inp.drone.yaw).abs() < 0.05;
                self.settled = if ok { self.settled + inp.dt } else { 0.0 };
                out.setpoint = Some(sp);
                self.last_sp = Some(sp);
                if self.settled >= self.cfg.settle_time {
                    self.depth_ref = self.cfg.staging_offset;
                    self.set_phase(&mut out, ManeuverPhase::Ascending);
                }
            }
            ManeuverPhase::Ascending => {
                let deviation = tgt.lateral - self.cfg.lateral_offset;
                if !inp.in_guides && deviation.abs() > self.cfg.safety_margin {
                    self.abort(&mut out, "lateral error beyond safety margin");
                } else if self.depth_ref < inp.closed_offset - self.cfg.overshoot {
                    self.abort(&mut out, "ascent budget exhausted");
                } else {
                    self.depth_ref -= self.cfg.ascent_speed * inp.dt;
                }
                let depth = if self.phase == ManeuverPhase::Ascending { self.depth_ref } else { self.cfg.staging_offset };
                let r = self.reference(inp, &tgt, depth);
                let vel = if self.phase == ManeuverPhase::Ascending { tgt.v_axis * self.cfg.ascent_speed } else { Vec3::zeros() };
                let sp = Setpoint { position: r, velocity: vel, yaw };
                out.setpoint = Some(sp);
                self.last_sp = Some(sp);
            }
            _ => {}
        }
        out
    }

    pub fn phase(&self) -> ManeuverPhase {
        self.phase
    }

    pub fn status(&self) -> &ManeuverStatus {
        &self.status
    }
}

#[derive(Debug, Clone)]
pub struct Takeoff {
    cfg: TakeoffConfig,
    phase: ManeuverPhase,
    spool: f64,
    anchor: Option<Setpoint>,
    status: ManeuverStatus,
    started: bool,
}

impl Takeoff {
    pub fn new(cfg: TakeoffConfig) -> Self {
        Self { cfg, phase: ManeuverPhase::Arming, spool: 0.0, anchor: None, status: ManeuverStatus::Running, started: false }
    }

    pub fn phase(&self) -> ManeuverPhase {
        self.phase
    }

    pub fn status(&self) -> &ManeuverStatus {
        &self.status
    }

    pub fn tick(&mut self, inp: &ManeuverInput) -> ManeuverOutput {
        let mut out = ManeuverOutput::default();
        if self.status != ManeuverStatus::Running {
            return out;
        }
        match self.phase {
            ManeuverPhase::Arming => {
                if !self.started {
                    if !inp.can_lift_off {
                        let reason = "battery below lift-off floor".to_string();
                        out.events.push(ManeuverEvent::Refused { reason: reason.clone() });
                        self.status = ManeuverStatus::Refused(reason);
                        self.phase = ManeuverPhase::Done;
                        return out;
                    }
                    self.started = true;
                    out.arm = Some(true);
                    return out;
                }
                self.spool += inp.dt;
                if self.spool >= self.cfg.spool_time && inp.drone.armed && inp.thrust_available >= inp.weight {
                    out.mmc_command = Some(MmcCommand::Open);
                    self.phase = ManeuverPhase::Releasing;
                    out.events.push(ManeuverEvent::Phase { phase: self.phase });
                }
            }
            ManeuverPhase::Releasing => {
                if inp.mmc_released {
                    out.detach = true;
                    let drop = (self.cfg.offset_below - inp.closed_offset).max(0.0);
                    let sp = Setpoint::hold(inp.drone.position - up() * drop, inp.drone.yaw);
                    self.anchor = Some(sp);
                    out.setpoint = Some(sp);
                    self.phase = ManeuverPhase::Descending;
                    out.events.push(ManeuverEvent::Phase { phase: self.phase });
                }
            }
            ManeuverPhase::Descending => {
                let sp = self.anchor.unwrap_or(Setpoint::hold(inp.drone.position, inp.drone.yaw));
                out.setpoint = Some(sp);
                if (sp.position - inp.drone.position).norm() < self.cfg.tolerance && inp.drone.velocity.norm() < 0.1 {
                    self.phase = ManeuverPhase::Done;
                    self.status = ManeuverStatus::Succeeded;
                    out.events.push(ManeuverEvent::Succeeded);
                }
            }
            _ => {}
        }
        out
    }
}

/// The single active maneuver.
#[derive(Debug, Clone)]
pub enum Maneuver {
    Hover(Hover),
    Landing(Landing),
    Takeoff(Takeoff),
    /// Attached and idle on the cable.
    Perched,
}

impl Maneuver {
    pub fn kind(&self) -> Option<ManeuverKind> {
        match self {
            Maneuver::Hover(_) => Some(ManeuverKind::Hover),
            Maneuver::Landing(_) => Some(ManeuverKind::Landing),
            Maneuver::Takeoff(_) => Some(ManeuverKind::Takeoff),
            Maneuver::Perched => None,
        }
    }

    pub fn phase(&self) -> Option<ManeuverPhase> {
        match self {
            Maneuver::Hover(_) => Some(ManeuverPhase::Holding),
            Maneuver::Landing(l) => Some(l.phase()),
            Maneuver::Takeoff(t) => Some(t.phase()),
            Maneuver::Perched => None,
        }
    }

    pub fn status(&self) -> ManeuverStatus {
        match self {
            Maneuver::Landing(l) => l.status().clone(),
            Maneuver::Takeoff(t) => t.status().clone(),
            _ => ManeuverStatus::Running,
        }
    }

    pub fn tick(&mut self, inp: &ManeuverInput) -> ManeuverOutput {
        match self {
            Maneuver::Hover(h) => ManeuverOutput { setpoint: Some(Setpoint::hold(h.anchor, h.yaw)), ..Default::default() },
            Maneuver::Landing(l) => l.tick(inp),
            Maneuver::Takeoff(t) => t.tick(inp),
            Maneuver::Perched => ManeuverOutput::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(drone: DroneState, target: Option<TargetEstimate>) -> ManeuverInput {
        ManeuverInput {
            dt: 0.01,
            drone,
            target,
            mechanism: GripperState::Open,
            in_guides: false,
            closed_offset: 0.1,
            mmc_status: GripperStatus::Open,
            mmc_released: false,
            holding_force: 0.0,
            weight: 42.18,
            thrust_available: 84.0,
            can_lift_off: true,
        }
    }

    fn target(lateral: f64, vertical: f64) -> TargetEstimate {
        TargetEstimate {
            track_id: 1,
            lateral,
            vertical,
            u_axis: Vec3::new(1.0, 0.0, 0.0),
            v_axis: Vec3::new(0.0, 0.0, 1.0),
            direction: Vec3::new(0.0, 1.0, 0.0),
        }
    }

    #[test]
    fn staging_reference_below_cable() {
        let mut l = Landing::new(LandingConfig::default());
        let d = DroneState::hovering(Vec3::new(0.3, 5.0, 7.0), 4.3);
        let out = l.tick(&input(d, Some(target(-0.3, 3.0))));
        let sp = out.setpoint.unwrap();
        assert!((sp.position - Vec3::new(0.0, 5.0, 8.5)).norm() < 1e-12);
        assert!(out.mmc_command.is_none());
    }

    #[test]
    fn lost_track_fails_without_gripper_command() {
        let mut l = Landing::new(LandingConfig::default());
        let d = DroneState::hovering(Vec3::new(0.0, 0.0, 8.5), 4.3);
        for _ in 0..200 {
            let out = l.tick(&input(d, None));
            assert!(out.mmc_command.is_none());
        }
        assert!(matches!(l.status(), ManeuverStatus::Failed(_)));
    }

    #[test]
    fn takeoff_refused_below_floor() {
        let mut t = Takeoff::new(TakeoffConfig::default());
        let mut d = DroneState::hovering(Vec3::new(0.0, 0.0, 9.9), 4.3);
        d.armed = false;
        d.attached = true;
        let mut inp = input(d, None);
        inp.can_lift_off = false;
        let out = t.tick(&inp);
        assert!(out.mmc_command.is_none() && out.arm.is_none());
        assert!(matches!(t.status(), ManeuverStatus::Refused(_)));
    }

    #[test]
    fn takeoff_arms_before_open() {
        let mut t = Takeoff::new(TakeoffConfig::default());
        let mut d = DroneState::hovering(Vec3::new(0.0, 0.0, 9.9), 4.3);
        d.armed = false;
        d.attached = true;
        let out = t.tick(&input(d, None));
        assert_eq!(out.arm, Some(true));
        d.armed = true;
        let mut opened_at = None;
        for k in 0..200 {
            let out = t.tick(&input(d, None));
            if out.mmc_command == Some(MmcCommand::Open) {
                opened_at = Some(k);
            }
        }
        assert!(opened_at.unwrap() >= 99);
    }
}
