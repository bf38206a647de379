use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Result, SimError};
use crate::mmc::{Mmc, MmcCommand, MmcParams};
use crate::powertrain::BatteryParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub currents: Vec<f64>,
    /// Line cycles given to P&O before measuring.
    pub warmup_cycles: usize,
    pub measure_cycles: usize,
    /// Battery voltage presented to the controller (keeps it in charging mode).
    pub battery_voltage: f64,
    /// Fraction of usable energy counted by the charge-time column.
    pub charge_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            currents: (1..=10).map(|k| k as f64 * 100.0).collect(),
            warmup_cycles: 800,
            measure_cycles: 100,
            battery_voltage: 23.5,
            charge_fraction: 0.55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ip_rms: f64,
    pub power_w: f64,
    pub charge_time_min: f64,
    pub window_start_deg: f64,
    pub window_width_deg: f64,
    pub holding_force: f64,
}

/// Converge P&O at one line current and report the cycle-average harvest.
pub fn sweep_point(
    circuit: &CircuitParams,
    mmc: &MmcParams,
    battery: &BatteryParams,
    line_frequency: f64,
    circuit_dt: f64,
    ip_rms: f64,
    cfg: &SweepConfig,
) -> Result<SweepPoint> {
    if !(ip_rms > 0.0 && ip_rms.is_finite()) {
        return Err(SimError::ParameterOutOfRange(ip_rms));
    }
    let mut m = Mmc::new(mmc.clone(), circuit.clone(), line_frequency, circuit_dt)?;
    m.command(MmcCommand::Closed, cfg.battery_voltage);
    m.run_cycles(cfg.warmup_cycles, ip_rms, cfg.battery_voltage);
    let reports = m.run_cycles(cfg.measure_cycles.max(1), ip_rms, cfg.battery_voltage);
    let power = reports.iter().map(|r| r.harvested_power).sum::<f64>() / reports.len() as f64;
    let (s, w) = m.effective_window().degrees();
    let energy_wh = cfg.charge_fraction * battery.usable_energy_wh();
    Ok(SweepPoint {
        ip_rms,
        power_w: power,
        charge_time_min: if power > 0.0 { energy_wh / power * 60.0 } else { f64::INFINITY },
        window_start_deg: s,
        window_width_deg: w,
        holding_force: m.holding_force(),
    })
}

pub fn sweep_charging(
    circuit: &CircuitParams,
    mmc: &MmcParams,
    battery: &BatteryParams,
    line_frequency: f64,
    circuit_dt: f64,
    cfg: &SweepConfig,
) -> Result<Vec<SweepPoint>> {
    cfg.currents
        .iter()
        .map(|&ip| sweep_point(circuit, mmc, battery, line_frequency, circuit_dt, ip, cfg))
        .collect()
}

/// Least-squares line y = a + b x; returns (a, b, r^2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 0.5 * x).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
