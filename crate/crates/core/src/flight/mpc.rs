use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub q_pos: f64,
    pub q_vel: f64,
    pub r: f64,
    /// Per-axis acceleration bound, m/s^2.
    pub accel_limit: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { horizon: 20, q_pos: 4.0, q_vel: 2.0, r: 0.1, accel_limit: 4.0 }
    }
}

/// Double-integrator model for one axis at step `dt`.
pub fn double_integrator(dt: f64) -> (Matrix2<f64>, Vector2<f64>) {
    (Matrix2::new(1.0, dt, 0.0, 1.0), Vector2::new(0.5 * dt * dt, dt))
}

/// Infinite-horizon cost-to-go for the axis model, by Riccati iteration.
pub fn terminal_weight(cfg: &MpcConfig, dt: f64) -> Matrix2<f64> {
    let (a, b) = double_integrator(dt);
    let q = Matrix2::new(cfg.q_pos, 0.0, 0.0, cfg.q_vel);
    let mut p = q;
    for _ in 0..200_000 {
        let bp = b.transpose() * p;
        let s = cfg.r + (bp * b)[(0, 0)];
        let k = (bp * a) / s;
        let next = q + a.transpose() * p * a - (a.transpose() * p * b) * k;
        let diff = (next - p).abs().max();
        p = next;
        if diff < 1e-13 * p.abs().max().max(1.0) {
            break;
        }
    }
    p
}

/// Receding-horizon tracker. The horizon problem is condensed into one
/// quadratic in the control sequence; only the first move is applied, and it
/// is clamped to the acceleration box.
#[derive(Debug, Clone)]
pub struct Mpc {
    pub cfg: MpcConfig,
    pub dt: f64,
    gain: Vector2<f64>,
}

impl Mpc {
    pub fn new(cfg: MpcConfig, dt: f64) -> Result<Self> {
        if cfg.horizon == 0 || !(cfg.q_pos > 0.0 && cfg.q_vel >= 0.0 && cfg.r > 0.0 && cfg.accel_limit > 0.0) {
            return Err(SimError::Config("mpc weights and horizon must be positive".into()));
        }
        if !(dt > 0.0) {
            return Err(SimError::BadStep(dt));
        }
        let gain = condensed_first_gain(&cfg, dt);
        Ok(Self { cfg, dt, gain })
    }

    /// Feedback gain on (position error, velocity error) of the first move.
    pub fn gain(&self) -> Vector2<f64> {
        self.gain
    }

    /// Unclamped first move for one axis.
    pub fn axis_control(&self, pos_err: f64, vel_err: f64) -> f64 {
        -(self.gain.x * pos_err + self.gain.y * vel_err)
    }

    /// Acceleration command tracking a reference moving at `ref_vel`.
    pub fn plan_step(&self, pos: &Vec3, vel: &Vec3, ref_pos: &Vec3, ref_vel: &Vec3) -> Vec3 {
        let lim = self.cfg.accel_limit;
        let mut a = Vec3::zeros();
        for i in 0..3 {
            a[i] = self.axis_control(pos[i] - ref_pos[i], vel[i] - ref_vel[i]).clamp(-lim, lim);
        }
        a
    }
}

fn condensed_first_gain(cfg: &MpcConfig, dt: f64) -> Vector2<f64> {
    let h = cfg.horizon;
    let (a, b) = double_integrator(dt);
    let pf = terminal_weight(cfg, dt);
    let q = Matrix2::new(cfg.q_pos, 0.0, 0.0, cfg.q_vel);
    // Predicted states x_1..x_H = Phi x_0 + Gamma U.
    let mut phi = DMatrix::zeros(2 * h, 2);
    let mut gamma = DMatrix::zeros(2 * h, h);
    let mut ak = Matrix2::identity();
    for k in 0..h {
        ak = a * ak;
        phi.fixed_view_mut::<2, 2>(2 * k, 0).copy_from(&ak);
        for j in 0..=k {
            let mut m = Matrix2::identity();
            for _ in 0..(k - j) {
                m = a * m;
            }
            gamma.fixed_view_mut::<2, 1>(2 * k, j).copy_from(&(m * b));
        }
    }
    let mut qbar = DMatrix::zeros(2 * h, 2 * h);
    for k in 0..h {
        let w = if k + 1 == h { pf } else { q };
        qbar.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(&w);
    }
    let hess = gamma.transpose() * &qbar * &gamma + DMatrix::identity(h, h) * cfg.r;
    let lin = gamma.transpose() * &qbar * &phi;
    let chol = hess.cholesky().expect("horizon Hessian is positive definite");
    let sol = chol.solve(&lin);
    let row: DVector<f64> = sol.row(0).transpose();
    Vector2::new(row[0], row[1])
}
