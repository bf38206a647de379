use approx::assert_relative_eq;
use nalgebra::{Matrix2, Vector2};
use std::f64::consts::{PI, SQRT_2};

use perchsim_core::circuit::{holding_force, step_circuit, CircuitParams, CircuitState, LineSource, SwitchState};
use perchsim_core::flight::mpc::{Mpc, MpcConfig};
use perchsim_core::mmc::{mode3_switch_schedule, select_mode, MmcMode, MmcThresholds};
use perchsim_core::perception::kalman::{kf_update, Track};
use perchsim_core::perception::projection::Vec2;
use perchsim_core::powertrain::{can_lift_off, hover_power, step_battery, BatteryParams, BatteryState};

#[test]
fn kf_update_matches_scalar_closed_form() {
    // Diagonal P and R decouple into two scalar filters.
    let cases = [(0.3, 0.04, 1.2, -0.7, 0.01, 0.09), (2.0, 1e-3, -0.5, 0.25, 0.5, 1e-4), (1e-3, 1e-3, 0.0, 0.0, 1e-3, 1e-3)];
    for (p1, p2, x1, x2, r1, r2) in cases {
        let t = Track {
            id: 1,
            position: Vec2::new(x1, x2),
            covariance: Matrix2::new(p1, 0.0, 0.0, p2),
            hits: 0,
            consecutive_misses: 0,
            confirmed: false,
        };
        let z = Vec2::new(x1 + 0.05, x2 - 0.03);
        let u = kf_update(&t, &z, &Matrix2::new(r1, 0.0, 0.0, r2), f64::INFINITY).unwrap();
        let k1 = p1 / (p1 + r1);
        let k2 = p2 / (p2 + r2);
        assert!((u.position.x - (x1 + k1 * 0.05)).abs() < 1e-9);
        assert!((u.position.y - (x2 - k2 * 0.03)).abs() < 1e-9);
        assert!((u.covariance[(0, 0)] - p1 * r1 / (p1 + r1)).abs() < 1e-9);
        assert!((u.covariance[(1, 1)] - p2 * r2 / (p2 + r2)).abs() < 1e-9);
        assert!(u.covariance[(0, 1)].abs() < 1e-12);
    }
}

#[test]
fn kf_gate_rejects_outliers() {
    let t = Track {
        id: 1,
        position: Vec2::zeros(),
        covariance: Matrix2::identity() * 0.01,
        hits: 0,
        consecutive_misses: 0,
        confirmed: false,
    };
    let r = Matrix2::identity() * 0.01;
    // d^2 = 1 / 0.02 = 50.
    let e = kf_update(&t, &Vec2::new(1.0, 0.0), &r, 9.21).unwrap_err();
    assert_relative_eq!(e.mahalanobis2, 50.0, epsilon = 1e-9);
}

/// Discrete LQR gain for the double integrator by plain Riccati recursion.
fn lqr_gain(q_pos: f64, q_vel: f64, r: f64, dt: f64) -> Vector2<f64> {
    let a = Matrix2::new(1.0, dt, 0.0, 1.0);
    let b = Vector2::new(0.5 * dt * dt, dt);
    let q = Matrix2::new(q_pos, 0.0, 0.0, q_vel);
    let mut p = q;
    for _ in 0..500_000 {
        let s = r + (b.transpose() * p * b)[(0, 0)];
        let k = (b.transpose() * p * a) / s;
        p = q + a.transpose() * p * (a - b * k);
        p = 0.5 * (p + p.transpose());
    }
    let s = r + (b.transpose() * p * b)[(0, 0)];
    ((b.transpose() * p * a) / s).transpose()
}

#[test]
fn mpc_first_move_equals_lqr() {
    for (h, dt) in [(1, 0.01), (5, 0.01), (20, 0.01), (20, 0.05)] {
        let cfg = MpcConfig { horizon: h, ..MpcConfig::default() };
        let mpc = Mpc::new(cfg.clone(), dt).unwrap();
        let k = lqr_gain(cfg.q_pos, cfg.q_vel, cfg.r, dt);
        assert_relative_eq!(mpc.gain(), k, max_relative = 1e-6);
    }
}

#[test]
fn mpc_clamps_to_acceleration_box() {
    let mpc = Mpc::new(MpcConfig::default(), 0.01).unwrap();
    let a = mpc.plan_step(
        &nalgebra::Vector3::new(100.0, -100.0, 0.0),
        &nalgebra::Vector3::zeros(),
        &nalgebra::Vector3::zeros(),
        &nalgebra::Vector3::zeros(),
    );
    assert_eq!(a.x, -4.0);
    assert_eq!(a.y, 4.0);
    assert_eq!(a.z, 0.0);
}

#[test]
fn shorted_winding_decays_with_rl_time_constant() {
    let p = CircuitParams::default();
    let src = LineSource { amplitude: 0.0, omega: 2.0 * PI * 50.0 };
    let mut s = CircuitState { i_m: 0.6, ..Default::default() };
    let dt = 1e-4;
    for k in 1..=20_000 {
        s = step_circuit(&s, &p, &src, 0.0, SwitchState::Shorted, dt);
        if k % 5000 == 0 {
            let t = k as f64 * dt;
            assert_relative_eq!(s.i_m, 0.6 * (-t * p.winding_resistance / p.magnetizing_inductance).exp(), max_relative = 1e-10);
        }
    }
    assert_relative_eq!(p.tau(), 5.0, max_relative = 1e-12);
}

#[test]
fn shorted_winding_steady_state_amplitude() {
    // Periodic response of L di/dt = R (i_s - i): amplitude X R / |R + j w L|.
    let p = CircuitParams::default();
    let ip = 288.0;
    let src = LineSource::new(&p, ip, 50.0);
    let n = 200;
    let dt = 0.02 / n as f64;
    let mut s = CircuitState::default();
    let mut peak: f64 = 0.0;
    for k in 0..(n * 2000) {
        let th = 2.0 * PI * (k % n) as f64 / n as f64;
        s = step_circuit(&s, &p, &src, th, SwitchState::Shorted, dt);
        if k >= n * 1999 {
            peak = peak.max(s.i_m.abs());
        }
    }
    let x = SQRT_2 * ip / p.turns;
    let w = 2.0 * PI * 50.0;
    let expected = x * p.winding_resistance / (p.winding_resistance.powi(2) + (w * p.magnetizing_inductance).powi(2)).sqrt();
    // Residual of the decaying offset after 40 s is exp(-8).
    assert_relative_eq!(peak, expected, max_relative = 2e-3);
}

#[test]
fn holding_force_is_quadratic() {
    let p = CircuitParams::default();
    assert_relative_eq!(holding_force(&p, 0.5), 150.0, max_relative = 1e-12);
    assert_relative_eq!(holding_force(&p, 1.0) / holding_force(&p, 0.25), 16.0, max_relative = 1e-12);
}

#[test]
fn mode_selection_thresholds() {
    let th = MmcThresholds::default();
    assert_eq!(select_mode(10.0, 25.2, &th), MmcMode::Mode1);
    assert_eq!(select_mode(288.0, 23.0, &th), MmcMode::Mode2);
    assert_eq!(select_mode(288.0, 25.2, &th), MmcMode::Mode3);
}

#[test]
fn mode3_window_starts_where_source_reaches_hold_current() {
    let p = CircuitParams::default();
    let w = mode3_switch_schedule(288.0, 0.55, 8f64.to_radians(), &p);
    let x = SQRT_2 * 288.0 / p.turns;
    assert_relative_eq!(x * w.start_phase.sin(), 0.55, max_relative = 1e-12);
    assert_relative_eq!(w.width, 8f64.to_radians());
}

#[test]
fn hover_endurance_closed_form() {
    let b = BatteryParams::default();
    let p = hover_power(&b, 4.3).unwrap();
    // 55% of 7 Ah * 22.2 V over 7.5 minutes.
    assert_relative_eq!(p, 0.55 * 155.4 / 0.125, max_relative = 1e-12);
    let heavier = hover_power(&b, 4.3 * 1.21).unwrap();
    assert_relative_eq!(heavier / p, 1.21f64.powf(1.5), max_relative = 1e-12);
    assert!(hover_power(&b, 0.0).is_err());
}

#[test]
fn terminal_power_balance() {
    let b = BatteryParams::default();
    let s = BatteryState::new(&b, 0.7);
    for p in [-683.76, -50.0, 0.0, 50.0] {
        let n = step_battery(&s, &b, p, 0.01);
        assert_relative_eq!(n.terminal_voltage * n.current, p, epsilon = 1e-9);
        assert_relative_eq!(n.terminal_voltage - b.ocv(n.soc), n.current * b.internal_resistance, epsilon = 1e-12);
    }
    assert!(can_lift_off(&b, 0.45));
    assert!(!can_lift_off(&b, 0.449));
}
