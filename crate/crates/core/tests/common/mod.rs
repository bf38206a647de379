#![allow(dead_code)]

use perchsim_core::mission::MissionState;
use perchsim_core::mmc::GripperStatus;
use perchsim_core::scenario::StartMode;
use perchsim_core::telemetry::{Event, RunOutcome, TelemetryRecord};
use perchsim_core::{Scenario, Simulator};

/// Operator-scripted mission with roughly 20% SoC swings.
pub fn scripted_mission(cycles: u32) -> Scenario {
    let mut s = Scenario::default();
    s.mission.auto_thresholds = false;
    s.mission.max_cycles = Some(cycles);
    s.operator.initiate_below_soc = Some(0.775);
    s.operator.interrupt_above_soc = Some(0.965);
    s.telemetry.decimation = 100;
    s
}

/// Short loop: take off from the cable, hover briefly, land, top up, take off.
pub fn short_cycle(seed: u64) -> Scenario {
    let mut s = Scenario::default();
    s.seed = seed;
    s.duration = 900.0;
    s.drone.start = StartMode::Charging;
    s.drone.initial_soc = 0.95;
    s.mission.auto_thresholds = false;
    s.mission.max_cycles = Some(2);
    s.operator.initiate_below_soc = Some(0.93);
    s.operator.interrupt_above_soc = Some(0.94);
    s
}

pub fn run(s: Scenario) -> (RunOutcome, Vec<TelemetryRecord>, Option<String>) {
    let mut sim = Simulator::new(s).expect("valid scenario");
    let mut records = Vec::new();
    let outcome = sim
        .run(|r| {
            records.push(r.clone());
            Ok(())
        })
        .expect("run");
    (outcome, records, sim.failure_reason().map(str::to_string))
}

pub fn airborne(r: &TelemetryRecord) -> bool {
    !r.attached && r.altitude > 1e-6
}

fn active(state: MissionState) -> bool {
    !matches!(state, MissionState::Idle | MissionState::Halted)
}

/// Safety invariants over a logged run. `weight` is the drone weight in N.
pub fn check_invariants(records: &[TelemetryRecord], weight: f64, soc_floor: f64) -> Result<(), String> {
    for r in records {
        let closed_disarmed = r.gripper_status == GripperStatus::Closed && !r.armed && r.attached;
        if r.mission_state == MissionState::Charging && !closed_disarmed {
            return Err(format!("t={}: charging without closed gripper and disarmed motors", r.t));
        }
        if active(r.mission_state) && closed_disarmed && r.mission_state != MissionState::Charging {
            return Err(format!("t={}: closed and disarmed outside charging ({:?})", r.t, r.mission_state));
        }
        for e in &r.events {
            if let Event::Armed { armed: false } = e {
                if r.gripper_status != GripperStatus::Closed || r.holding_force < weight {
                    return Err(format!("t={}: disarmed with status {:?} force {}", r.t, r.gripper_status, r.holding_force));
                }
            }
        }
        if airborne(r) && r.soc < soc_floor {
            return Err(format!("t={}: airborne at soc {}", r.t, r.soc));
        }
    }
    Ok(())
}
