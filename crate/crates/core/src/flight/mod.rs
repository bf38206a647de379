pub mod maneuver;
pub mod mpc;

use serde::{Deserialize, Serialize};

use crate::drone::{wrap_angle, DroneState};
use crate::error::Result;
use crate::geometry::Vec3;
use maneuver::{LandingConfig, Setpoint, TakeoffConfig};
use mpc::{Mpc, MpcConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlightConfig {
    pub mpc: MpcConfig,
    pub landing: LandingConfig,
    pub takeoff: TakeoffConfig,
    /// Proportional yaw gain, 1/s.
    pub yaw_gain: f64,
    pub yaw_rate_limit: f64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            landing: LandingConfig::default(),
            takeoff: TakeoffConfig::default(),
            yaw_gain: 2.0,
            yaw_rate_limit: 1.0,
        }
    }
}

/// Turns a setpoint into acceleration and yaw-rate commands.
#[derive(Debug, Clone)]
pub struct FlightController {
    pub mpc: Mpc,
    yaw_gain: f64,
}

impl FlightController {
    pub fn new(cfg: &FlightConfig, dt: f64) -> Result<Self> {
        Ok(Self { mpc: Mpc::new(cfg.mpc.clone(), dt)?, yaw_gain: cfg.yaw_gain })
    }

    pub fn track(&self, drone: &DroneState, sp: &Setpoint) -> (Vec3, f64) {
        let a = self.mpc.plan_step(&drone.position, &drone.velocity, &sp.position, &sp.velocity);
        let yaw_rate = self.yaw_gain * wrap_angle(sp.yaw - drone.yaw);
        (a, yaw_rate)
    }
}
