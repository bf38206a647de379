use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::circuit::{
    holding_force, step_circuit, step_transfer_until_zero, CircuitParams, CircuitState, LineSource, SwitchState,
};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MmcMode {
    Idle,
    /// SW2 holds a DC magnetizing current from the battery.
    Mode1,
    /// Transfer windows harvest into the bus.
    Mode2,
    /// Short hold window keeps the core magnetized with the battery full.
    Mode3,
    /// Demagnetizing prior to release.
    Opening,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MmcCommand {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GripperStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmcThresholds {
    pub ip_hold_min: f64,
    pub v_full: f64,
    /// Mode 3 is kept until the battery falls this far below `v_full`.
    pub v_full_hysteresis: f64,
}

impl Default for MmcThresholds {
    fn default() -> Self {
        Self { ip_hold_min: 40.0, v_full: 25.2, v_full_hysteresis: 0.05 }
    }
}

/// Mode for a closed gripper given the sensed line current and battery voltage.
pub fn select_mode(ip_rms: f64, battery_voltage: f64, th: &MmcThresholds) -> MmcMode {
    if ip_rms < th.ip_hold_min {
        MmcMode::Mode1
    } else if battery_voltage >= th.v_full {
        MmcMode::Mode3
    } else {
        MmcMode::Mode2
    }
}

/// Phase interval (radians, within a half cycle) during which SW1 is open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferWindow {
    pub start_phase: f64,
    pub width: f64,
}

impl TransferWindow {
    pub fn from_degrees(start: f64, width: f64) -> Self {
        Self { start_phase: start.to_radians(), width: width.to_radians() }
    }

    pub fn degrees(&self) -> (f64, f64) {
        (self.start_phase.to_degrees(), self.width.to_degrees())
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_phase < -1e-12 || self.width <= 0.0 || self.start_phase + self.width > PI + 1e-9 {
            return Err(SimError::Config(format!(
                "transfer window start {} width {} outside [0, pi]",
                self.start_phase, self.width
            )));
        }
        Ok(())
    }
}

/// Open intervals of a window applied to both half cycles.
pub fn symmetric_intervals(w: &TransferWindow) -> [(f64, f64); 2] {
    let a = w.start_phase;
    let b = w.start_phase + w.width;
    [(a, b), (a + PI, b + PI)]
}

/// SW1 schedule while the battery is full: a single short window on the
/// rising positive half cycle, placed where the source current reaches the
/// hold target so that the magnetizing current settles near it.
pub fn mode3_switch_schedule(ip_rms: f64, hold_current: f64, hold_width: f64, params: &CircuitParams) -> TransferWindow {
    let x = std::f64::consts::SQRT_2 * ip_rms / params.turns;
    let start = if x > hold_current { (hold_current / x).asin() } else { 0.5 * (PI - hold_width) };
    let start = start.clamp(0.0, PI - hold_width);
    TransferWindow { start_phase: start, width: hold_width }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PnoParam {
    Start,
    Width,
}

/// Perturb-and-observe tracker that alternates between the two window
/// parameters, one perturbation per line cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnoTracker {
    pub step: f64,
    pub min_width: f64,
    dir_start: f64,
    dir_width: f64,
    last: Option<PnoParam>,
}

impl PnoTracker {
    pub fn new(step: f64, min_width: f64) -> Self {
        Self { step, min_width, dir_start: 1.0, dir_width: 1.0, last: None }
    }

    pub fn direction(&self, p: PnoParam) -> f64 {
        match p {
            PnoParam::Start => self.dir_start,
            PnoParam::Width => self.dir_width,
        }
    }

    /// One P&O update: judge the previous perturbation from the power change,
    /// then perturb the other parameter.
    pub fn step(&mut self, window: TransferWindow, p_prev: f64, p_now: f64) -> TransferWindow {
        if let Some(last) = self.last {
            if p_now <= p_prev {
                match last {
                    PnoParam::Start => self.dir_start = -self.dir_start,
                    PnoParam::Width => self.dir_width = -self.dir_width,
                }
            }
        }
        let next = match self.last {
            Some(PnoParam::Start) => PnoParam::Width,
            _ => PnoParam::Start,
        };
        self.last = Some(next);
        self.perturb(window, next)
    }

    fn perturb(&mut self, w: TransferWindow, p: PnoParam) -> TransferWindow {
        let mut out = w;
        match p {
            PnoParam::Start => {
                // Move the leading edge; the trailing edge stays put.
                let end = w.start_phase + w.width;
                let target = w.start_phase + self.dir_start * self.step;
                out.start_phase = target.clamp(0.0, (end - self.min_width).max(0.0));
                out.width = end - out.start_phase;
                if (out.start_phase - w.start_phase).abs() < 1e-12 {
                    self.dir_start = -self.dir_start;
                }
            }
            PnoParam::Width => {
                let target = w.width + self.dir_width * self.step;
                out.width = target.clamp(self.min_width, PI - w.start_phase);
                if (out.width - w.width).abs() < 1e-12 {
                    self.dir_width = -self.dir_width;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmcParams {
    pub thresholds: MmcThresholds,
    pub pno_step_deg: f64,
    pub min_width_deg: f64,
    pub initial_window_deg: (f64, f64),
    /// Line cycles per perturbation; only the last cycle of each period is
    /// observed so that switching transients do not bias the comparison.
    pub pno_period_cycles: u32,
    /// Magnetizing current held in mode 3 and by SW2 in mode 1.
    pub hold_current: f64,
    pub hold_width_deg: f64,
    pub release_force: f64,
    /// Gripper-status noise floor as a fraction of the expected signal.
    pub status_floor_fraction: f64,
    /// Open SW1 only while the bridge drives the magnetizing current toward
    /// zero during opening; otherwise keep it shorted.
    pub active_demag: bool,
}

impl Default for MmcParams {
    fn default() -> Self {
        Self {
            thresholds: MmcThresholds::default(),
            pno_step_deg: 1.0,
            min_width_deg: 1.0,
            initial_window_deg: (30.0, 120.0),
            pno_period_cycles: 2,
            hold_current: 0.55,
            hold_width_deg: 8.0,
            release_force: 5.0,
            status_floor_fraction: 0.005,
            active_demag: true,
        }
    }
}

impl MmcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pno_step_deg > 0.0 && self.min_width_deg > 0.0 && self.pno_period_cycles >= 1) {
            return Err(SimError::Config("pno step and min width must be positive".into()));
        }
        TransferWindow::from_degrees(self.initial_window_deg.0, self.initial_window_deg.1).validate()?;
        if !(self.hold_current > 0.0 && self.hold_width_deg > 0.0 && self.hold_width_deg < 180.0) {
            return Err(SimError::Config("mode 3 hold parameters out of range".into()));
        }
        if !(self.release_force > 0.0) {
            return Err(SimError::Config("release_force must be positive".into()));
        }
        Ok(())
    }
}

/// Per-line-cycle measurements.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub index: u64,
    pub mean_abs_im: f64,
    pub harvested_power: f64,
    pub drain_power: f64,
    pub ip_rms_est: f64,
    pub status_signal: f64,
    /// Phase at which the bridge stopped conducting in the first half cycle,
    /// if that happened before the window closed.
    pub effective_end: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningState {
    pub elapsed: f64,
    pub latched: bool,
    pub latch_time: Option<f64>,
    pub fallback: bool,
    pub prior_mean_abs_im: f64,
    pub released_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct CycleAcc {
    sum_abs_im: f64,
    harvested_j: f64,
    drain_j: f64,
    sum_is2: f64,
    sum_branch: f64,
    sum_branch2: f64,
    n_branch: usize,
    effective_end: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmcTelemetry {
    pub mode: MmcMode,
    pub command: MmcCommand,
    pub status: GripperStatus,
    pub holding_force: f64,
    pub mean_abs_im: f64,
    pub harvest_power: f64,
    pub window_start_deg: f64,
    pub window_width_deg: f64,
}

/// Charger/gripper controller together with the circuit it drives. Stepped
/// at the circuit rate; decisions that need a full line cycle of data are
/// taken at cycle boundaries.
#[derive(Debug, Clone)]
pub struct Mmc {
    pub params: MmcParams,
    pub circuit_params: CircuitParams,
    pub circuit: CircuitState,
    n_cycle: usize,
    dt: f64,
    k: usize,
    cycles: u64,
    command: MmcCommand,
    mode: MmcMode,
    window: TransferWindow,
    pno: PnoTracker,
    prev_power: Option<f64>,
    pno_wait: u32,
    conduction_done: [bool; 2],
    opening: Option<OpeningState>,
    ring: Vec<f64>,
    ring_pos: usize,
    ring_sum: f64,
    acc: CycleAcc,
    last_cycle: CycleReport,
    status: GripperStatus,
    ip_est: f64,
    time: f64,
}

impl Mmc {
    pub fn new(params: MmcParams, circuit_params: CircuitParams, line_frequency: f64, circuit_dt: f64) -> Result<Self> {
        params.validate()?;
        circuit_params.validate()?;
        let ratio = 1.0 / (line_frequency * circuit_dt);
        let n = ratio.round();
        if (ratio - n).abs() > 1e-6 || n < 8.0 {
            return Err(SimError::Config(format!(
                "line period is not an integer number of circuit steps ({ratio})"
            )));
        }
        let n = n as usize;
        let window = TransferWindow::from_degrees(params.initial_window_deg.0, params.initial_window_deg.1);
        let pno = PnoTracker::new(params.pno_step_deg.to_radians(), params.min_width_deg.to_radians());
        Ok(Self {
            params,
            circuit_params,
            circuit: CircuitState::default(),
            n_cycle: n,
            dt: circuit_dt,
            k: 0,
            cycles: 0,
            command: MmcCommand::Open,
            mode: MmcMode::Idle,
            window,
            pno,
            prev_power: None,
            pno_wait: 0,
            conduction_done: [false; 2],
            opening: None,
            ring: vec![0.0; n],
            ring_pos: 0,
            ring_sum: 0.0,
            acc: CycleAcc::default(),
            last_cycle: CycleReport::default(),
            status: GripperStatus::Open,
            ip_est: 0.0,
            time: 0.0,
        })
    }

    pub fn substeps_per_cycle(&self) -> usize {
        self.n_cycle
    }

    pub fn circuit_dt(&self) -> f64 {
        self.dt
    }

    pub fn period(&self) -> f64 {
        self.n_cycle as f64 * self.dt
    }

    /// Align the internal line phase with substep `k` of the cycle.
    pub fn set_phase_index(&mut self, k: usize) {
        self.k = k % self.n_cycle;
    }

    pub fn phase_index(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> MmcMode {
        self.mode
    }

    pub fn command_state(&self) -> MmcCommand {
        self.command
    }

    pub fn status(&self) -> GripperStatus {
        self.status
    }

    pub fn window(&self) -> TransferWindow {
        self.window
    }

    /// Window actually used in the last cycle: the commanded one, cut short
    /// where the bridge stopped conducting.
    pub fn effective_window(&self) -> TransferWindow {
        let mut w = self.window;
        if let Some(end) = self.last_cycle.effective_end {
            w.width = (end - w.start_phase).clamp(0.0, w.width);
        }
        w
    }

    pub fn set_window(&mut self, w: TransferWindow) {
        self.window = w;
    }

    pub fn last_cycle(&self) -> CycleReport {
        self.last_cycle
    }

    pub fn opening(&self) -> Option<OpeningState> {
        self.opening
    }

    pub fn ip_estimate(&self) -> f64 {
        self.ip_est
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Mean |I_m| over the most recent line period.
    pub fn moving_mean_abs_im(&self) -> f64 {
        self.ring_sum / self.n_cycle as f64
    }

    pub fn holding_force(&self) -> f64 {
        holding_force(&self.circuit_params, self.moving_mean_abs_im())
    }

    /// True while the circuit needs integrating.
    pub fn is_active(&self) -> bool {
        self.mode != MmcMode::Idle || self.circuit.i_m.abs() > 1e-9 || self.command == MmcCommand::Closed
    }

    pub fn command(&mut self, cmd: MmcCommand, battery_voltage: f64) {
        if cmd == self.command {
            return;
        }
        self.command = cmd;
        match cmd {
            MmcCommand::Open => {
                if self.mode == MmcMode::Idle {
                    self.status = GripperStatus::Open;
                    return;
                }
                self.mode = MmcMode::Opening;
                self.opening = Some(OpeningState {
                    elapsed: 0.0,
                    latched: false,
                    latch_time: None,
                    fallback: !self.params.active_demag,
                    prior_mean_abs_im: self.last_cycle.mean_abs_im,
                    released_at: None,
                });
            }
            MmcCommand::Closed => {
                self.opening = None;
                self.enter_mode(self.closed_mode(battery_voltage));
            }
        }
    }

    /// Open the switch permanently (plain short) instead of demagnetizing.
    pub fn command_naive_open(&mut self) {
        self.command = MmcCommand::Open;
        self.mode = MmcMode::Opening;
        self.opening = Some(OpeningState {
            elapsed: 0.0,
            latched: false,
            latch_time: None,
            fallback: true,
            prior_mean_abs_im: self.last_cycle.mean_abs_im,
            released_at: None,
        });
    }

    fn closed_mode(&self, battery_voltage: f64) -> MmcMode {
        let th = &self.params.thresholds;
        let m = select_mode(self.ip_est, battery_voltage, th);
        if self.mode == MmcMode::Mode3
            && m == MmcMode::Mode2
            && battery_voltage >= th.v_full - th.v_full_hysteresis
        {
            return MmcMode::Mode3;
        }
        m
    }

    fn enter_mode(&mut self, m: MmcMode) {
        if m != self.mode {
            self.prev_power = None;
        }
        self.mode = m;
    }

    fn source(&self, ip_rms: f64) -> LineSource {
        LineSource::new(&self.circuit_params, ip_rms, 1.0 / self.period())
    }

    fn phase(&self, k: f64) -> f64 {
        2.0 * PI * k / self.n_cycle as f64
    }

    fn run_windowed(&mut self, ip: f64, intervals: &[(f64, f64)]) {
        let th0 = self.phase(self.k as f64);
        let th1 = self.phase(self.k as f64 + 1.0);
        let src = self.source(ip);
        let mut c = self.circuit;
        let (cuts, n) = segment_cuts(intervals, th0, th1);
        let mut lo = th0;
        for i in 0..=n {
            let hi = if i < n { cuts[i] } else { th1 };
            if hi <= lo {
                continue;
            }
            let dt = self.dt * (hi - lo) / (th1 - th0);
            let mid = 0.5 * (lo + hi);
            let idx = intervals.iter().position(|&(a, b)| mid >= a && mid < b);
            match idx {
                Some(j) if !self.conduction_done[j] => {
                    let (next, stop) = step_transfer_until_zero(&c, &self.circuit_params, &src, lo, dt);
                    c = next;
                    if let Some(ts) = stop {
                        self.conduction_done[j] = true;
                        let th_stop = lo + src.omega * ts;
                        if j == 0 {
                            self.acc.effective_end = Some(th_stop);
                        }
                        c = step_circuit(&c, &self.circuit_params, &src, th_stop, SwitchState::Shorted, dt - ts);
                        self.note_shorted(&c);
                    }
                }
                _ => {
                    c = step_circuit(&c, &self.circuit_params, &src, lo, SwitchState::Shorted, dt);
                    self.note_shorted(&c);
                }
            }
            lo = hi;
        }
        self.circuit = c;
    }

    fn note_shorted(&mut self, c: &CircuitState) {
        self.acc.sum_branch += c.i_branch;
        self.acc.sum_branch2 += c.i_branch * c.i_branch;
        self.acc.n_branch += 1;
    }

    fn run_opening(&mut self, ip: f64) {
        let cp = self.circuit_params.clone();
        let th0 = self.phase(self.k as f64);
        let th1 = self.phase(self.k as f64 + 1.0);
        let src = self.source(ip);
        let mut op = self.opening.expect("opening state");
        let c = self.circuit;
        if op.latched || op.fallback {
            self.circuit = step_circuit(&c, &cp, &src, th0, SwitchState::Shorted, self.dt);
        } else if c.i_m.abs() < 1e-9 {
            op.latched = true;
            op.latch_time = Some(op.elapsed);
            self.circuit = step_circuit(&c, &cp, &src, th0, SwitchState::Shorted, self.dt);
        } else {
            let e = src.at(th1) - c.i_m;
            let sw = if e.signum() == -c.i_m.signum() { SwitchState::Transfer } else { SwitchState::Shorted };
            let trial = step_circuit(&c, &cp, &src, th0, sw, self.dt);
            if trial.i_m == 0.0 || trial.i_m.signum() != c.i_m.signum() {
                let frac = (c.i_m / (c.i_m - trial.i_m)).clamp(0.0, 1.0);
                let th_f = th0 + frac * (th1 - th0);
                let seg = step_circuit(&c, &cp, &src, th0, sw, frac * self.dt);
                op.latched = true;
                op.latch_time = Some(op.elapsed + frac * self.dt);
                self.circuit = step_circuit(&seg, &cp, &src, th_f, SwitchState::Shorted, (1.0 - frac) * self.dt);
            } else {
                self.circuit = trial;
            }
        }
        op.elapsed += self.dt;
        if !op.latched && !op.fallback && op.elapsed >= self.period() - 1e-12 {
            op.fallback = true;
        }
        self.opening = Some(op);
    }

    /// Advance one circuit step. `ip_rms` is the line current seen by the
    /// core, zero when the gripper is off the cable.
    pub fn substep(&mut self, ip_rms: f64, battery_voltage: f64) {
        let before = self.circuit;
        match self.mode {
            MmcMode::Idle => {
                let src = self.source(ip_rms);
                let th0 = self.phase(self.k as f64);
                self.circuit = step_circuit(&self.circuit, &self.circuit_params, &src, th0, SwitchState::Shorted, self.dt);
            }
            MmcMode::Mode1 => {
                let src = self.source(ip_rms);
                let th0 = self.phase(self.k as f64);
                let sw = SwitchState::Drive { setpoint: self.params.hold_current };
                self.circuit = step_circuit(&self.circuit, &self.circuit_params, &src, th0, sw, self.dt);
                self.acc.sum_branch += self.circuit.i_branch;
                self.acc.sum_branch2 += self.circuit.i_branch * self.circuit.i_branch;
                self.acc.n_branch += 1;
            }
            MmcMode::Mode2 => {
                let iv = symmetric_intervals(&self.window);
                self.run_windowed(ip_rms, &iv);
            }
            MmcMode::Mode3 => {
                let w = mode3_switch_schedule(
                    self.ip_est,
                    self.params.hold_current,
                    self.params.hold_width_deg.to_radians(),
                    &self.circuit_params,
                );
                self.run_windowed(ip_rms, &[(w.start_phase, w.start_phase + w.width)]);
            }
            MmcMode::Opening => self.run_opening(ip_rms),
        }
        let c = self.circuit;
        let a = c.i_m.abs();
        self.ring_sum += a - self.ring[self.ring_pos];
        self.ring[self.ring_pos] = a;
        self.ring_pos = (self.ring_pos + 1) % self.n_cycle;
        self.acc.sum_abs_im += a;
        self.acc.harvested_j += c.harvested_j - before.harvested_j;
        self.acc.drain_j += c.drive_drain_j - before.drive_drain_j;
        self.acc.sum_is2 += c.i_s * c.i_s;
        self.time += self.dt;

        if self.mode == MmcMode::Opening {
            let op = self.opening.expect("opening state");
            if (op.latched || op.fallback) && op.released_at.is_none() && self.holding_force() < self.params.release_force {
                let mut op = op;
                op.released_at = Some(op.elapsed);
                self.opening = Some(op);
                self.status = GripperStatus::Open;
                self.mode = MmcMode::Idle;
            }
        }

        self.k += 1;
        if self.k == self.n_cycle {
            self.k = 0;
            self.end_cycle(battery_voltage);
        }
    }

    fn expected_current_signal(&self) -> f64 {
        self.params.thresholds.ip_hold_min / self.circuit_params.turns
    }

    fn end_cycle(&mut self, battery_voltage: f64) {
        let n = self.n_cycle as f64;
        let period = self.period();
        self.ring_sum = self.ring.iter().sum();
        let ac_rms = |s: f64, s2: f64, m: usize| {
            if m == 0 {
                0.0
            } else {
                let mean = s / m as f64;
                (s2 / m as f64 - mean * mean).max(0.0).sqrt()
            }
        };
        let harvested_power = self.acc.harvested_j / period;
        let branch_ac = ac_rms(self.acc.sum_branch, self.acc.sum_branch2, self.acc.n_branch);
        self.ip_est = (self.acc.sum_is2 / n).sqrt() * self.circuit_params.turns;
        let frac = self.params.status_floor_fraction;
        let (signal, floor) = match self.mode {
            MmcMode::Mode2 => (
                harvested_power,
                frac * self.circuit_params.bus_voltage * 0.9 * self.expected_current_signal(),
            ),
            MmcMode::Mode1 | MmcMode::Mode3 => (branch_ac, frac * self.expected_current_signal()),
            _ => (0.0, 0.0),
        };
        self.last_cycle = CycleReport {
            index: self.cycles,
            mean_abs_im: self.acc.sum_abs_im / n,
            harvested_power,
            drain_power: self.acc.drain_j / period,
            ip_rms_est: self.ip_est,
            status_signal: signal,
            effective_end: self.acc.effective_end,
        };
        self.conduction_done = [false; 2];
        self.cycles += 1;
        self.acc = CycleAcc::default();

        if matches!(self.mode, MmcMode::Mode1 | MmcMode::Mode2 | MmcMode::Mode3) {
            self.status = if signal > floor { GripperStatus::Closed } else { GripperStatus::Open };
        }
        if self.command == MmcCommand::Closed && self.mode != MmcMode::Opening {
            let next = self.closed_mode(battery_voltage);
            if next != self.mode {
                self.enter_mode(next);
            } else if next == MmcMode::Mode2 && self.pno_wait > 0 {
                self.pno_wait -= 1;
            } else if next == MmcMode::Mode2 {
                self.pno_wait = self.params.pno_period_cycles.saturating_sub(1);
                if let Some(prev) = self.prev_power {
                    self.window = self.pno.step(self.window, prev, harvested_power);
                }
                self.prev_power = Some(harvested_power);
            }
        }
    }

    pub fn telemetry(&self) -> MmcTelemetry {
        let (s, w) = self.window.degrees();
        MmcTelemetry {
            mode: self.mode,
            command: self.command,
            status: self.status,
            holding_force: self.holding_force(),
            mean_abs_im: self.moving_mean_abs_im(),
            harvest_power: self.last_cycle.harvested_power,
            window_start_deg: s,
            window_width_deg: w,
        }
    }

    /// One line cycle with the current window and no mode or P&O decisions.
    fn run_fixed_cycle(&mut self, ip_rms: f64) -> CycleReport {
        for _ in 0..self.n_cycle {
            let iv = symmetric_intervals(&self.window);
            let before = self.circuit;
            self.run_windowed(ip_rms, &iv);
            self.acc.harvested_j += self.circuit.harvested_j - before.harvested_j;
            self.k += 1;
        }
        self.k = 0;
        let r = CycleReport {
            harvested_power: self.acc.harvested_j / self.period(),
            effective_end: self.acc.effective_end,
            ..Default::default()
        };
        self.acc = CycleAcc::default();
        self.conduction_done = [false; 2];
        r
    }

    /// Run whole line cycles at constant conditions; returns the reports.
    pub fn run_cycles(&mut self, cycles: usize, ip_rms: f64, battery_voltage: f64) -> Vec<CycleReport> {
        let mut out = Vec::with_capacity(cycles);
        for _ in 0..cycles {
            let start = self.cycles;
            while self.cycles == start {
                self.substep(ip_rms, battery_voltage);
            }
            out.push(self.last_cycle);
        }
        out
    }
}

/// Breakpoints of `intervals` strictly inside (th0, th1), sorted.
fn segment_cuts(intervals: &[(f64, f64)], th0: f64, th1: f64) -> ([f64; 4], usize) {
    let mut cuts = [0.0f64; 4];
    let mut n = 0;
    for &(a, b) in intervals {
        for e in [a, b] {
            if e > th0 && e < th1 && n < 4 {
                cuts[n] = e;
                n += 1;
            }
        }
    }
    cuts[..n].sort_by(|a, b| a.total_cmp(b));
    (cuts, n)
}

/// Steady-state harvested power and effective window for a fixed symmetric
/// window: run from the given circuit state for `settle` cycles, then average
/// over `measure` cycles.
pub fn fixed_window_power(
    params: &CircuitParams,
    ip_rms: f64,
    window: TransferWindow,
    n_cycle: usize,
    circuit_dt: f64,
    state: &mut CircuitState,
    settle: usize,
    measure: usize,
) -> (f64, TransferWindow) {
    let mut mp = MmcParams::default();
    mp.initial_window_deg = (0.0, 180.0);
    let mut m = Mmc::new(mp, params.clone(), 1.0 / (n_cycle as f64 * circuit_dt), circuit_dt)
        .expect("valid circuit parameters");
    m.circuit = *state;
    m.window = window;
    m.mode = MmcMode::Mode2;
    m.command = MmcCommand::Closed;
    m.params.pno_period_cycles = u32::MAX;
    m.pno_wait = u32::MAX;
    let mut e = 0.0;
    let mut eff = window;
    for cyc in 0..settle + measure {
        let r = m.run_fixed_cycle(ip_rms);
        if cyc >= settle {
            e += r.harvested_power;
            if let Some(end) = r.effective_end {
                eff.width = (end - window.start_phase).min(window.width);
            }
        }
    }
    *state = m.circuit;
    (e / measure as f64, eff)
}

/// Exhaustive search over windows on a `step_deg` grid.
pub fn brute_force_window(
    params: &CircuitParams,
    ip_rms: f64,
    n_cycle: usize,
    circuit_dt: f64,
    step_deg: f64,
    settle: usize,
) -> (TransferWindow, f64) {
    let steps = (180.0 / step_deg).round() as usize;
    let mut best = (TransferWindow::from_degrees(0.0, 180.0), f64::NEG_INFINITY);
    for si in 0..steps {
        let mut state = CircuitState::default();
        for wi in (1..=(steps - si)).rev() {
            let w = TransferWindow::from_degrees(si as f64 * step_deg, wi as f64 * step_deg);
            let (p, eff) = fixed_window_power(params, ip_rms, w, n_cycle, circuit_dt, &mut state, settle, 1);
            if p > best.1 {
                best = (eff, p);
            }
        }
    }
    best
}
