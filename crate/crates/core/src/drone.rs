use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{up, Vec3};
use crate::powertrain::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub armed: bool,
    pub attached: bool,
    pub mass: f64,
    /// Thrust magnitude applied during the last step, in newtons.
    pub thrust: f64,
}

impl DroneState {
    pub fn hovering(position: Vec3, mass: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            yaw: 0.0,
            armed: true,
            attached: false,
            mass,
            thrust: mass * GRAVITY,
        }
    }

    pub fn airborne(&self) -> bool {
        !self.attached && self.position.z > 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsLimits {
    pub accel_limit: f64,
    pub yaw_rate_limit: f64,
    pub thrust_ceiling: f64,
}

/// Point-mass translational dynamics with a thrust ceiling and a ground
/// plane at z = 0. The commanded acceleration excludes gravity.
pub fn step_drone(state: &DroneState, accel_cmd: Vec3, yaw_rate_cmd: f64, dt: f64, limits: &DynamicsLimits) -> Result<DroneState> {
    if state.attached {
        return Err(SimError::AttachedStep);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadStep(dt));
    }
    let mut s = *state;
    let mut a_cmd = accel_cmd;
    let n = a_cmd.norm();
    if n > limits.accel_limit {
        a_cmd *= limits.accel_limit / n;
    }
    let g = up() * GRAVITY;
    let mut thrust_vec = if state.armed { (a_cmd + g) * state.mass } else { Vec3::zeros() };
    let t = thrust_vec.norm();
    if t > limits.thrust_ceiling {
        thrust_vec *= limits.thrust_ceiling / t;
    }
    let accel = thrust_vec / state.mass - g;
    s.velocity += accel * dt;
    s.position += s.velocity * dt;
    if s.position.z <= 0.0 {
        s.position.z = 0.0;
        s.velocity.z = s.velocity.z.max(0.0);
        if !state.armed || thrust_vec.z < state.mass * GRAVITY {
            s.velocity = Vec3::zeros();
        }
    }
    s.thrust = thrust_vec.norm();
    let yr = yaw_rate_cmd.clamp(-limits.yaw_rate_limit, limits.yaw_rate_limit);
    s.yaw = wrap_angle(state.yaw + yr * dt);
    Ok(s)
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + std::f64::consts::PI) % (2.0 * std::f64::consts::PI);
    if x < 0.0 {
        x += 2.0 * std::f64::consts::PI;
    }
    x - std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn limits() -> DynamicsLimits {
        DynamicsLimits { accel_limit: 4.0, yaw_rate_limit: 1.0, thrust_ceiling: 2.0 * 4.3 * GRAVITY }
    }

    #[test]
    fn hover_holds_position() {
        let s = DroneState::hovering(Vec3::new(0.0, 0.0, 5.0), 4.3);
        let n = step_drone(&s, Vec3::zeros(), 0.0, 0.01, &limits()).unwrap();
        assert_relative_eq!(n.position, s.position, epsilon = 1e-12);
        assert_relative_eq!(n.thrust, 4.3 * GRAVITY, epsilon = 1e-9);
    }

    #[test]
    fn attached_step_is_an_error() {
        let mut s = DroneState::hovering(Vec3::new(0.0, 0.0, 5.0), 4.3);
        s.attached = true;
        assert_eq!(step_drone(&s, Vec3::zeros(), 0.0, 0.01, &limits()), Err(SimError::AttachedStep));
    }

    #[test]
    fn insufficient_thrust_cannot_lift() {
        let mut s = DroneState::hovering(Vec3::zeros(), 4.3);
        s.velocity = Vec3::zeros();
        let mut l = limits();
        l.thrust_ceiling = 0.9 * 4.3 * GRAVITY;
        let n = step_drone(&s, Vec3::new(0.0, 0.0, 2.0), 0.0, 0.01, &l).unwrap();
        assert_eq!(n.position.z, 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), -std::f64::consts::PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.5), 0.5);
    }
}
