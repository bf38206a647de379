use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Result, SimError};

/// Lumped parameters of the split-core current transformer and its output
/// stage. The secondary source is the primary current divided by the turns
/// ratio; the magnetizing branch sits in parallel with the winding resistance
/// and SW1, and the output bridge clamps the winding to the regulated bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircuitParams {
    pub turns: f64,
    pub magnetizing_inductance: f64,
    pub winding_resistance: f64,
    pub bus_voltage: f64,
    /// Holding force coefficient in N/A^2.
    pub force_constant: f64,
    /// Battery voltage seen by SW2 when it drives a DC magnetizing current.
    pub drive_voltage: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            turns: 126.0,
            magnetizing_inductance: 0.11,
            winding_resistance: 0.022,
            bus_voltage: 25.2,
            force_constant: 600.0,
            drive_voltage: 22.2,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.turns, "turns"),
            (self.magnetizing_inductance, "magnetizing_inductance"),
            (self.winding_resistance, "winding_resistance"),
            (self.bus_voltage, "bus_voltage"),
            (self.force_constant, "force_constant"),
            (self.drive_voltage, "drive_voltage"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("circuit {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Time constant of the shorted magnetizing branch.
    pub fn tau(&self) -> f64 {
        self.magnetizing_inductance / self.winding_resistance
    }
}

/// Switch configuration for one integration segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SwitchState {
    /// SW1 conducting: the winding is shorted through its resistance.
    Shorted,
    /// SW1 open: current beyond the magnetizing branch flows into the bus.
    Transfer,
    /// SW2 drives the magnetizing current toward a DC setpoint.
    Drive { setpoint: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitState {
    pub i_m: f64,
    pub i_s: f64,
    /// Current through SW1 (shorted) or into the bridge (transfer).
    pub i_branch: f64,
    pub harvested_j: f64,
    pub drive_drain_j: f64,
}

/// Instantaneous primary current for an RMS value at line phase `theta`.
pub fn line_current(ip_rms: f64, theta: f64) -> f64 {
    SQRT_2 * ip_rms * theta.sin()
}

/// Secondary source current at line phase `theta`.
pub fn secondary_current(params: &CircuitParams, ip_rms: f64, theta: f64) -> f64 {
    line_current(ip_rms, theta) / params.turns
}

/// Sinusoidal secondary source `amplitude * sin(theta)` with `theta = omega t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSource {
    pub amplitude: f64,
    pub omega: f64,
}

impl LineSource {
    pub fn new(params: &CircuitParams, ip_rms: f64, line_frequency: f64) -> Self {
        Self { amplitude: SQRT_2 * ip_rms / params.turns, omega: 2.0 * PI * line_frequency }
    }

    pub fn at(&self, theta: f64) -> f64 {
        self.amplitude * theta.sin()
    }
}

/// Advance the circuit by `dt` seconds starting at line phase `theta0`.
/// Bridge conduction onset and end are located inside the step, so the
/// result is smooth in the switching instants.
pub fn step_circuit(
    state: &CircuitState,
    params: &CircuitParams,
    src: &LineSource,
    theta0: f64,
    sw: SwitchState,
    dt: f64,
) -> CircuitState {
    let l = params.magnetizing_inductance;
    let r = params.winding_resistance;
    let w = src.omega;
    let x = src.amplitude;
    let mut s = *state;
    let i_s_end = src.at(theta0 + w * dt);
    s.i_s = i_s_end;
    match sw {
        SwitchState::Shorted => {
            // Exact response of L di/dt = R (i_s - i) to a sinusoidal source.
            let z = (r * r + w * w * l * l).sqrt();
            let phi = (w * l).atan2(r);
            let ip = |th: f64| if z > 0.0 { x * r / z * (th - phi).sin() } else { 0.0 };
            let a = (-dt * r / l).exp();
            s.i_m = ip(theta0 + w * dt) + (state.i_m - ip(theta0)) * a;
            s.i_branch = i_s_end - s.i_m;
        }
        SwitchState::Transfer => {
            let (i_m, e_j, _) = transfer(state.i_m, params.bus_voltage / l, src, theta0, dt, false);
            s.i_m = i_m;
            s.i_branch = i_s_end - i_m;
            s.harvested_j += params.bus_voltage * e_j;
        }
        SwitchState::Drive { setpoint } => {
            let max_di = params.drive_voltage / l * dt;
            s.i_m = state.i_m + (setpoint - state.i_m).clamp(-max_di, max_di);
            s.i_branch = i_s_end - s.i_m;
            s.drive_drain_j += s.i_m * s.i_m * r * dt;
        }
    }
    s
}

/// Transfer step that ends as soon as the bridge stops conducting. Returns the
/// new state and, if conduction ended inside the step, the time at which it
/// did; the caller re-closes SW1 for the remainder.
pub fn step_transfer_until_zero(
    state: &CircuitState,
    params: &CircuitParams,
    src: &LineSource,
    theta0: f64,
    dt: f64,
) -> (CircuitState, Option<f64>) {
    let (i_m, q, stop) = transfer(state.i_m, params.bus_voltage / params.magnetizing_inductance, src, theta0, dt, true);
    let t_end = stop.unwrap_or(dt);
    let mut s = *state;
    s.i_m = i_m;
    s.i_s = src.at(theta0 + src.omega * t_end);
    s.i_branch = s.i_s - i_m;
    s.harvested_j += params.bus_voltage * q;
    (s, stop)
}

/// SW1 open: the magnetizing current follows the source while the bridge is
/// reverse-biased and slews at `slope` A/s while it conducts. Returns the new
/// magnetizing current, the charge (A s) delivered through the bridge and,
/// with `stop_on_zero`, the time at which the bridge stopped conducting.
fn transfer(i_m0: f64, slope: f64, src: &LineSource, theta0: f64, dt: f64, stop_on_zero: bool) -> (f64, f64, Option<f64>) {
    let w = src.omega;
    let is = |t: f64| src.at(theta0 + w * t);
    let dis = |t: f64| src.amplitude * w * (theta0 + w * t).cos();
    let int_is = |a: f64, b: f64| {
        // cos(u) - cos(v) in product form; stable when w (b - a) is tiny.
        let h = 0.5 * (b - a);
        let mid = theta0 + w * 0.5 * (a + b);
        let sinc = if w * h != 0.0 { (w * h).sin() / (w * h) } else { 1.0 };
        src.amplitude * mid.sin() * 2.0 * h * sinc
    };
    let tol = 1e-12 * (1.0 + src.amplitude);
    let mut t = 0.0;
    let mut i_m = i_m0;
    let mut q = 0.0;
    for _ in 0..8 {
        if t >= dt {
            break;
        }
        let e = is(t) - i_m;
        let sigma;
        if e.abs() <= tol {
            if stop_on_zero {
                return (is(t), q, Some(t));
            }
            if dis(t).abs() > slope {
                sigma = dis(t).signum();
            } else if dis(dt).abs() <= slope {
                i_m = is(dt);
                t = dt;
                break;
            } else {
                let (mut lo, mut hi) = (t, dt);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if dis(mid).abs() > slope {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                t = hi;
                i_m = is(t);
                sigma = dis(t).signum();
            }
        } else {
            sigma = e.signum();
        }
        let t_a = t;
        let i_a = i_m;
        let g = |tau: f64| is(tau) - (i_a + sigma * slope * (tau - t_a));
        let t_b = if sigma * g(dt) > 0.0 {
            dt
        } else {
            let (mut lo, mut hi) = (t_a, dt);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sigma * g(mid) > 0.0 || mid == t_a {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        let span = t_b - t_a;
        let int_lin = i_a * span + sigma * slope * span * span * 0.5;
        q += (sigma * (int_is(t_a, t_b) - int_lin)).max(0.0);
        if t_b >= dt {
            i_m = i_a + sigma * slope * span;
            t = dt;
        } else {
            i_m = is(t_b);
            t = t_b;
        }
    }
    if t < dt {
        i_m = is(dt);
    }
    (i_m, q, None)
}

/// Magnetic holding force for a cycle-averaged magnetizing current magnitude.
pub fn holding_force(params: &CircuitParams, mean_abs_im: f64) -> f64 {
    params.force_constant * mean_abs_im * mean_abs_im
}

/// Magnetizing current at which the holding force equals `force`.
pub fn current_for_force(params: &CircuitParams, force: f64) -> f64 {
    (force.max(0.0) / params.force_constant).sqrt()
}

/// Line phase for substep `k` of `n` per cycle.
pub fn substep_phase(k: f64, n: usize) -> f64 {
    2.0 * PI * k / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn shorted_decay_matches_rl_closed_form() {
        let p = CircuitParams::default();
        let mut s = CircuitState { i_m: 1.0, ..Default::default() };
        let dt = 1e-4;
        let n = 20_000;
        let src = LineSource { amplitude: 0.0, omega: 100.0 * PI };
        for _ in 0..n {
            s = step_circuit(&s, &p, &src, 0.0, SwitchState::Shorted, dt);
        }
        let expected = (-(n as f64) * dt / p.tau()).exp();
        assert_relative_eq!(s.i_m, expected, max_relative = 1e-9);
    }

    #[test]
    fn slow_source_is_absorbed_by_magnetizing_branch() {
        let p = CircuitParams::default();
        let src = LineSource { amplitude: 0.05, omega: 100.0 * PI };
        let mut s = CircuitState::default();
        for k in 0..200 {
            let th = 2.0 * PI * k as f64 / 200.0;
            s = step_circuit(&s, &p, &src, th, SwitchState::Transfer, 1e-4);
        }
        assert!(s.i_m.abs() < 1e-9);
        assert_eq!(s.harvested_j, 0.0);
    }

    #[test]
    fn transfer_slews_at_bus_voltage() {
        let p = CircuitParams::default();
        // Constant 5 A source approximated by a very slow sinusoid near its peak.
        let src = LineSource { amplitude: 5.0, omega: 1e-9 };
        let s = step_circuit(&CircuitState::default(), &p, &src, PI / 2.0, SwitchState::Transfer, 1e-4);
        let slew = p.bus_voltage / p.magnetizing_inductance * 1e-4;
        assert_relative_eq!(s.i_m, slew, max_relative = 1e-9);
        assert_relative_eq!(s.harvested_j, p.bus_voltage * (5.0 * 1e-4 - 0.5 * slew * 1e-4), max_relative = 1e-6);
    }

    #[test]
    fn substep_split_is_consistent() {
        let p = CircuitParams::default();
        let src = LineSource { amplitude: 3.0, omega: 100.0 * PI };
        let s0 = CircuitState { i_m: 0.2, ..Default::default() };
        let th = 0.3;
        let one = step_circuit(&s0, &p, &src, th, SwitchState::Transfer, 1e-4);
        let half = step_circuit(&s0, &p, &src, th, SwitchState::Transfer, 5e-5);
        let two = step_circuit(&half, &p, &src, th + src.omega * 5e-5, SwitchState::Transfer, 5e-5);
        assert_relative_eq!(one.i_m, two.i_m, epsilon = 1e-9);
        assert_relative_eq!(one.harvested_j, two.harvested_j, epsilon = 1e-12);
    }

    #[test]
    fn force_is_quadratic() {
        let p = CircuitParams::default();
        assert_relative_eq!(holding_force(&p, 0.5), 0.25 * p.force_constant);
        assert_relative_eq!(current_for_force(&p, holding_force(&p, 0.37)), 0.37, epsilon = 1e-12);
    }
}
