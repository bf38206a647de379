use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::flight::maneuver::{ManeuverEvent, ManeuverKind, ManeuverPhase};
use crate::gripper::GripperState;
use crate::mission::{MissionState, OperatorCommand};
use crate::mmc::{GripperStatus, MmcCommand, MmcMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Operator,
    Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// Configured number of cycles done.
    Completed,
    /// Operator stop.
    Stopped,
    DurationElapsed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    MissionTransition { from: MissionState, to: MissionState },
    Command {
        command: OperatorCommand,
        source: CommandSource,
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    ManeuverStarted { maneuver: ManeuverKind },
    Maneuver { maneuver: ManeuverKind, detail: ManeuverEvent },
    MmcCommand { command: MmcCommand },
    MmcMode { from: MmcMode, to: MmcMode },
    GripperStatus { status: GripperStatus },
    Gripper { from: GripperState, to: GripperState },
    Armed { armed: bool },
    Attached,
    Detached,
    Disturbance { displacement: f64 },
    RunEnd {
        outcome: RunOutcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

/// One line of the JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub step: u64,
    pub t: f64,
    pub mission_state: MissionState,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub yaw: f64,
    pub altitude: f64,
    pub armed: bool,
    pub attached: bool,
    pub battery_voltage: f64,
    pub soc: f64,
    /// Harvested power over the last line cycle, W.
    pub charging_power: f64,
    /// Net power at the battery terminals, W (positive = charging).
    pub battery_power: f64,
    pub mmc_mode: MmcMode,
    pub mmc_command: MmcCommand,
    pub gripper_status: GripperStatus,
    pub gripper: GripperState,
    pub holding_force: f64,
    pub line_current: f64,
    pub window_start_deg: f64,
    pub window_width_deg: f64,
    pub maneuver: Option<ManeuverKind>,
    pub maneuver_phase: Option<ManeuverPhase>,
    pub landing_index: u32,
    pub landing_attempt: u32,
    pub target_lateral: Option<f64>,
    pub target_vertical: Option<f64>,
    /// True offset of the nearest cable from the gripper, across the span.
    pub cable_lateral: f64,
    pub cable_vertical: f64,
    pub confirmed_tracks: usize,
    pub cycles_completed: u32,
    pub aborts: u32,
    pub energy_in_wh: f64,
    pub energy_out_wh: f64,
    pub events: Vec<Event>,
}

impl TelemetryRecord {
    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| SimError::Io(e.to_string()))
    }
}

/// Writes records as JSON lines.
pub struct JsonlWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, rec: &TelemetryRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec).map_err(|e| SimError::Io(e.to_string()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parse a JSONL log. Blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<TelemetryRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TelemetryRecord =
            serde_json::from_str(line).map_err(|e| SimError::LogParse { line: i + 1, msg: e.to_string() })?;
        out.push(r);
    }
    Ok(out)
}
