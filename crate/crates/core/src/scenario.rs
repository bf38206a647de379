use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Result, SimError};
use crate::flight::FlightConfig;
use crate::geometry::PowerlineSpec;
use crate::gripper::GripperGeometry;
use crate::mission::{MissionConfig, OperatorCommand};
use crate::mmc::MmcParams;
use crate::perception::PerceptionConfig;
use crate::powertrain::BatteryParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    pub flight_dt: f64,
    pub circuit_dt: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self { flight_dt: 0.01, circuit_dt: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Hovering below the start cable, mission idle until started.
    Hovering,
    /// Perched on the start cable with the gripper closed and disarmed.
    Charging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DroneConfig {
    pub mass: f64,
    pub start: StartMode,
    pub start_cable: usize,
    /// Fraction along the start cable.
    pub start_s: f64,
    pub start_offset_below: f64,
    pub initial_soc: f64,
}

impl Default for DroneConfig {
    fn default() -> Self {
        Self {
            mass: 4.3,
            start: StartMode::Hovering,
            start_cable: 1,
            start_s: 0.5,
            start_offset_below: 1.5,
            initial_soc: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t: f64,
    pub command: OperatorCommand,
}

/// Stand-in for a human operator: commands fired on time or on battery
/// state, delivered through the same queue as live commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorScript {
    /// Send `start` on the first tick of a headless run.
    pub auto_start: bool,
    pub initiate_below_soc: Option<f64>,
    pub interrupt_above_soc: Option<f64>,
    pub timed: Vec<TimedCommand>,
}

impl Default for OperatorScript {
    fn default() -> Self {
        Self { auto_start: true, initiate_below_soc: None, interrupt_above_soc: None, timed: Vec::new() }
    }
}

/// Lateral shove applied during a chosen landing attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Disturbance {
    /// 1-based landing maneuver index.
    pub landing: u32,
    /// 1-based attempt within that landing.
    pub attempt: u32,
    /// Seconds after the ascent starts.
    pub after_ascent: f64,
    /// Displacement across the span, m.
    pub displacement: f64,
    pub duration: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self { landing: 2, attempt: 1, after_ascent: 1.0, displacement: 0.2, duration: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TelemetryConfig {
    /// Emit every n-th flight step; steps carrying events are always emitted.
    pub decimation: u32,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self { decimation: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    /// Simulated time limit, s.
    pub duration: f64,
    pub clock: ClockConfig,
    pub world: PowerlineSpec,
    pub drone: DroneConfig,
    pub battery: BatteryParams,
    pub circuit: CircuitParams,
    pub mmc: MmcParams,
    pub gripper: GripperGeometry,
    pub perception: PerceptionConfig,
    pub flight: FlightConfig,
    pub mission: MissionConfig,
    pub operator: OperatorScript,
    pub disturbances: Vec<Disturbance>,
    pub telemetry: TelemetryConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 4.0 * 3600.0,
            clock: ClockConfig::default(),
            world: PowerlineSpec::three_phase(10.0, 1.5, 100.0, 0.5, 288.0),
            drone: DroneConfig::default(),
            battery: BatteryParams::default(),
            circuit: CircuitParams::default(),
            mmc: MmcParams::default(),
            gripper: GripperGeometry::default(),
            perception: PerceptionConfig::default(),
            flight: FlightConfig::default(),
            mission: MissionConfig::default(),
            operator: OperatorScript::default(),
            disturbances: Vec::new(),
            telemetry: TelemetryConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::Config("duration must be positive".into()));
        }
        crate::clock::SimClock::new(self.clock.flight_dt, self.clock.circuit_dt)?;
        self.world.validate()?;
        if self.drone.start_cable >= self.world.cables.len() {
            return Err(SimError::Config(format!("start_cable {} does not exist", self.drone.start_cable)));
        }
        if !(self.drone.mass > 0.0) {
            return Err(SimError::BadMass(self.drone.mass));
        }
        if !(0.0..=1.0).contains(&self.drone.start_s) || !(0.0..=1.0).contains(&self.drone.initial_soc) {
            return Err(SimError::Config("start_s and initial_soc must lie in [0, 1]".into()));
        }
        if !(self.drone.start_offset_below > 0.0) {
            return Err(SimError::Config("start_offset_below must be positive".into()));
        }
        self.battery.validate()?;
        self.circuit.validate()?;
        self.mmc.validate()?;
        self.gripper.validate()?;
        self.flight.landing.validate(self.gripper.max_misalignment())?;
        self.mission.validate()?;
        if self.telemetry.decimation == 0 {
            return Err(SimError::Config("telemetry decimation must be >= 1".into()));
        }
        for d in &self.disturbances {
            if d.landing == 0 || d.attempt == 0 || !(d.duration > 0.0) {
                return Err(SimError::Config("disturbance landing/attempt are 1-based and duration > 0".into()));
            }
        }
        let period_steps = 1.0 / (self.world.line_frequency * self.clock.circuit_dt);
        if (period_steps - period_steps.round()).abs() > 1e-6 {
            return Err(SimError::Config("line period must be a whole number of circuit steps".into()));
        }
        Ok(())
    }
}
