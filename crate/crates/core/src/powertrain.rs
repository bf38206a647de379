use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub capacity_ah: f64,
    pub nominal_voltage: f64,
    pub internal_resistance: f64,
    /// (soc, open-circuit voltage) breakpoints, increasing in soc.
    pub ocv_table: Vec<(f64, f64)>,
    /// Mass at which the reference hover endurance was measured.
    pub reference_mass: f64,
    /// Hover time in minutes that consumes `endurance_fraction` of usable energy
    /// at the reference mass.
    pub endurance_min: f64,
    pub endurance_fraction: f64,
    pub hover_mass_exponent: f64,
    pub min_takeoff_soc: f64,
    pub thrust_to_weight: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_ah: 7.0,
            nominal_voltage: 22.2,
            internal_resistance: 0.045,
            ocv_table: vec![(0.0, 21.0), (0.2, 22.2), (0.45, 22.9), (0.8, 24.4), (1.0, 25.2)],
            reference_mass: 4.3,
            endurance_min: 7.5,
            endurance_fraction: 0.55,
            hover_mass_exponent: 1.5,
            min_takeoff_soc: 0.45,
            thrust_to_weight: 2.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::Config(format!("battery {name} must be positive")))
            }
        };
        pos(self.capacity_ah, "capacity_ah")?;
        pos(self.nominal_voltage, "nominal_voltage")?;
        pos(self.reference_mass, "reference_mass")?;
        pos(self.endurance_min, "endurance_min")?;
        pos(self.endurance_fraction, "endurance_fraction")?;
        pos(self.thrust_to_weight, "thrust_to_weight")?;
        if !(self.internal_resistance >= 0.0) {
            return Err(SimError::Config("internal_resistance must be >= 0".into()));
        }
        if self.ocv_table.len() < 2 {
            return Err(SimError::Config("ocv_table needs at least two points".into()));
        }
        for w in self.ocv_table.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 < w[0].1 {
                return Err(SimError::Config("ocv_table must be increasing".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.min_takeoff_soc) {
            return Err(SimError::Config("min_takeoff_soc must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Usable energy in watt-hours.
    pub fn usable_energy_wh(&self) -> f64 {
        self.capacity_ah * self.nominal_voltage
    }

    pub fn ocv(&self, soc: f64) -> f64 {
        let soc = soc.clamp(0.0, 1.0);
        let t = &self.ocv_table;
        if soc <= t[0].0 {
            return t[0].1;
        }
        for w in t.windows(2) {
            let (s0, v0) = w[0];
            let (s1, v1) = w[1];
            if soc <= s1 {
                return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
            }
        }
        t[t.len() - 1].1
    }

    pub fn weight(&self, mass: f64) -> f64 {
        mass * GRAVITY
    }
}

/// Electrical power drawn while hovering at `mass`. Calibrated so that the
/// reference endurance holds at the reference mass.
pub fn hover_power(params: &BatteryParams, mass: f64) -> Result<f64> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(SimError::BadMass(mass));
    }
    let reference = params.endurance_fraction * params.usable_energy_wh() / (params.endurance_min / 60.0);
    Ok(reference * (mass / params.reference_mass).powf(params.hover_mass_exponent))
}

pub fn can_lift_off(params: &BatteryParams, soc: f64) -> bool {
    soc >= params.min_takeoff_soc
}

/// Maximum available thrust. Below the takeoff floor the pack sags too far to
/// sustain the weight.
pub fn thrust_ceiling(params: &BatteryParams, soc: f64, mass: f64) -> f64 {
    let w = params.weight(mass);
    if can_lift_off(params, soc) {
        params.thrust_to_weight * w
    } else {
        0.95 * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    pub terminal_voltage: f64,
    /// Terminal current, positive while charging.
    pub current: f64,
    /// Cumulative energy into / out of the terminals in joules.
    pub energy_in_j: f64,
    pub energy_out_j: f64,
    /// Energy refused because the pack was full, in joules.
    pub energy_discarded_j: f64,
}

impl BatteryState {
    pub fn new(params: &BatteryParams, soc: f64) -> Self {
        let soc = soc.clamp(0.0, 1.0);
        Self {
            soc,
            terminal_voltage: params.ocv(soc),
            current: 0.0,
            energy_in_j: 0.0,
            energy_out_j: 0.0,
            energy_discarded_j: 0.0,
        }
    }
}

/// Advance the pack by `dt` with `net_power` watts at the terminals
/// (positive = charging). State of charge integrates terminal energy against
/// the usable energy; terminal voltage follows OCV plus the resistive drop.
pub fn step_battery(state: &BatteryState, params: &BatteryParams, net_power: f64, dt: f64) -> BatteryState {
    let mut s = *state;
    let e_usable_j = params.usable_energy_wh() * 3600.0;
    let mut p = net_power;
    if p > 0.0 && s.soc >= 1.0 {
        s.energy_discarded_j += p * dt;
        p = 0.0;
    }
    let mut dsoc = p * dt / e_usable_j;
    if s.soc + dsoc > 1.0 {
        let accepted = (1.0 - s.soc) * e_usable_j;
        s.energy_discarded_j += p * dt - accepted;
        p = accepted / dt;
        dsoc = 1.0 - s.soc;
    }
    if s.soc + dsoc < 0.0 {
        dsoc = -s.soc;
        p = dsoc * e_usable_j / dt;
    }
    s.soc = (s.soc + dsoc).clamp(0.0, 1.0);
    if p >= 0.0 {
        s.energy_in_j += p * dt;
    } else {
        s.energy_out_j += -p * dt;
    }
    let ocv = params.ocv(s.soc);
    let r = params.internal_resistance;
    let i = if r > 0.0 {
        let disc = (ocv * ocv + 4.0 * r * p).max(0.0);
        (-ocv + disc.sqrt()) / (2.0 * r)
    } else {
        p / ocv
    };
    s.current = i;
    s.terminal_voltage = ocv + i * r;
    s
}
