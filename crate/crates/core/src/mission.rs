use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionState {
    /// Waiting for a start command, hovering.
    Idle,
    Inspecting,
    LandingOnCable,
    Charging,
    TakingOffFromCable,
    /// Stopped or finished; no further autonomous transitions.
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorCommand {
    Start,
    Stop,
    InitiateCharging,
    InterruptCharging,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandAck {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

impl CommandAck {
    fn ok() -> Self {
        Self { accepted: true, reason: None }
    }

    fn reject(reason: impl Into<String>) -> Self {
        Self { accepted: false, reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    /// Land and take off on battery voltage without operator input.
    pub auto_thresholds: bool,
    pub v_low: f64,
    pub v_high: f64,
    /// Land regardless of other settings once state of charge drops here.
    pub reserve_soc: f64,
    /// Halt after this many completed charge cycles.
    pub max_cycles: Option<u32>,
    pub landing_retry_delay: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            auto_thresholds: true,
            v_low: 22.9,
            v_high: 25.1,
            reserve_soc: 0.5,
            max_cycles: None,
            landing_retry_delay: 5.0,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_low < self.v_high) {
            return Err(SimError::Config("mission v_low must be below v_high".into()));
        }
        if !(0.0..=1.0).contains(&self.reserve_soc) {
            return Err(SimError::Config("reserve_soc must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Outcome of the maneuver owned by the current mission state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManeuverStatus {
    Running,
    Succeeded,
    Failed(String),
    Refused(String),
}

#[derive(Debug, Clone)]
pub struct MissionContext {
    pub t: f64,
    pub terminal_voltage: f64,
    pub soc: f64,
    pub can_lift_off: bool,
    pub maneuver: ManeuverStatus,
}

#[derive(Debug, Clone)]
pub struct Mission {
    pub cfg: MissionConfig,
    state: MissionState,
    cycles_completed: u32,
    retry_at: f64,
    start_state: MissionState,
}

impl Mission {
    pub fn new(cfg: MissionConfig, initial: MissionState) -> Self {
        Self { cfg, state: initial, cycles_completed: 0, retry_at: 0.0, start_state: MissionState::Inspecting }
    }

    /// Idle mission that enters `start_state` on the start command.
    pub fn idle(cfg: MissionConfig, start_state: MissionState) -> Self {
        Self { start_state, ..Self::new(cfg, MissionState::Idle) }
    }

    pub fn state(&self) -> MissionState {
        self.state
    }

    pub fn cycles_completed(&self) -> u32 {
        self.cycles_completed
    }

    /// Apply an operator command at a tick boundary.
    pub fn handle_command(&mut self, cmd: OperatorCommand, ctx: &MissionContext) -> CommandAck {
        use MissionState::*;
        match (cmd, self.state) {
            (OperatorCommand::Start, Idle) => {
                self.state = self.start_state;
                CommandAck::ok()
            }
            (OperatorCommand::Start, s) => CommandAck::reject(format!("mission already started ({s:?})")),
            (OperatorCommand::Stop, Idle | Inspecting | Charging) => {
                self.state = Halted;
                CommandAck::ok()
            }
            (OperatorCommand::Stop, Halted) => CommandAck::reject("mission already halted"),
            (OperatorCommand::Stop, s) => CommandAck::reject(format!("maneuver in progress ({s:?})")),
            (OperatorCommand::InitiateCharging, Inspecting) => {
                self.state = LandingOnCable;
                CommandAck::ok()
            }
            (OperatorCommand::InitiateCharging, s) => CommandAck::reject(format!("not inspecting ({s:?})")),
            (OperatorCommand::InterruptCharging, Charging) => {
                if ctx.can_lift_off {
                    self.state = TakingOffFromCable;
                    CommandAck::ok()
                } else {
                    CommandAck::reject(format!(
                        "state of charge {:.3} below takeoff threshold",
                        ctx.soc
                    ))
                }
            }
            (OperatorCommand::InterruptCharging, s) => CommandAck::reject(format!("not charging ({s:?})")),
        }
    }

    /// Autonomous transitions; returns the new state when it changes.
    pub fn step(&mut self, ctx: &MissionContext) -> Option<MissionState> {
        use MissionState::*;
        let next = match self.state {
            Inspecting => {
                let reserve = ctx.soc <= self.cfg.reserve_soc;
                let low = self.cfg.auto_thresholds && ctx.terminal_voltage <= self.cfg.v_low;
                if (reserve || low) && ctx.t >= self.retry_at {
                    Some(LandingOnCable)
                } else {
                    None
                }
            }
            LandingOnCable => match &ctx.maneuver {
                ManeuverStatus::Succeeded => Some(Charging),
                ManeuverStatus::Failed(_) | ManeuverStatus::Refused(_) => {
                    self.retry_at = ctx.t + self.cfg.landing_retry_delay;
                    Some(Inspecting)
                }
                ManeuverStatus::Running => None,
            },
            Charging => {
                if self.cfg.auto_thresholds && ctx.terminal_voltage >= self.cfg.v_high && ctx.can_lift_off {
                    Some(TakingOffFromCable)
                } else {
                    None
                }
            }
            TakingOffFromCable => match &ctx.maneuver {
                ManeuverStatus::Succeeded => {
                    self.cycles_completed += 1;
                    if self.cfg.max_cycles.is_some_and(|m| self.cycles_completed >= m) {
                        Some(Halted)
                    } else {
                        Some(Inspecting)
                    }
                }
                ManeuverStatus::Failed(_) | ManeuverStatus::Refused(_) => Some(Charging),
                ManeuverStatus::Running => None,
            },
            Idle | Halted => None,
        };
        if let Some(n) = next {
            self.state = n;
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(soc: f64, v: f64, m: ManeuverStatus) -> MissionContext {
        MissionContext { t: 0.0, terminal_voltage: v, soc, can_lift_off: soc >= 0.45, maneuver: m }
    }

    #[test]
    fn operator_commands() {
        let mut m = Mission::new(MissionConfig::default(), MissionState::Inspecting);
        let c = ctx(0.8, 24.0, ManeuverStatus::Running);
        assert!(!m.handle_command(OperatorCommand::InterruptCharging, &c).accepted);
        assert!(m.handle_command(OperatorCommand::InitiateCharging, &c).accepted);
        assert_eq!(m.state(), MissionState::LandingOnCable);
        assert!(!m.handle_command(OperatorCommand::Stop, &c).accepted);
    }

    #[test]
    fn interrupt_refused_below_floor() {
        let mut m = Mission::new(MissionConfig::default(), MissionState::Charging);
        let ack = m.handle_command(OperatorCommand::InterruptCharging, &ctx(0.44, 22.8, ManeuverStatus::Running));
        assert!(!ack.accepted);
        assert!(ack.reason.unwrap().contains("below takeoff"));
        assert_eq!(m.state(), MissionState::Charging);
    }

    #[test]
    fn full_cycle_counts() {
        let cfg = MissionConfig { max_cycles: Some(1), ..Default::default() };
        let mut m = Mission::new(cfg, MissionState::Inspecting);
        assert_eq!(m.step(&ctx(0.7, 22.8, ManeuverStatus::Running)), Some(MissionState::LandingOnCable));
        assert_eq!(m.step(&ctx(0.7, 22.8, ManeuverStatus::Succeeded)), Some(MissionState::Charging));
        assert_eq!(m.step(&ctx(0.95, 25.15, ManeuverStatus::Running)), Some(MissionState::TakingOffFromCable));
        assert_eq!(m.step(&ctx(0.95, 24.0, ManeuverStatus::Succeeded)), Some(MissionState::Halted));
        assert_eq!(m.cycles_completed(), 1);
    }

    #[test]
    fn failed_landing_backs_off() {
        let mut m = Mission::new(MissionConfig::default(), MissionState::LandingOnCable);
        let mut c = ctx(0.7, 22.8, ManeuverStatus::Failed("track lost".into()));
        c.t = 10.0;
        assert_eq!(m.step(&c), Some(MissionState::Inspecting));
        c.maneuver = ManeuverStatus::Running;
        c.t = 12.0;
        assert_eq!(m.step(&c), None);
        c.t = 15.0;
        assert_eq!(m.step(&c), Some(MissionState::LandingOnCable));
    }
}
