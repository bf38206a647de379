use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clock::SimClock;
use crate::drone::{step_drone, DroneState, DynamicsLimits};
use crate::error::Result;
use crate::flight::maneuver::{Hover, Landing, Maneuver, ManeuverEvent, ManeuverInput, ManeuverPhase, Setpoint, Takeoff};
use crate::flight::FlightController;
use crate::geometry::{cross_section_basis, up, Vec3};
use crate::gripper::{update_mechanism, GripperMechanism, GripperState, MechanismInput};
use crate::mission::{CommandAck, ManeuverStatus, Mission, MissionContext, MissionState, OperatorCommand};
use crate::mmc::{GripperStatus, Mmc, MmcCommand, MmcMode};
use crate::perception::{Perception, TargetEstimate};
use crate::powertrain::{can_lift_off, hover_power, step_battery, thrust_ceiling, BatteryState};
use crate::scenario::{Scenario, StartMode};
use crate::telemetry::{CommandSource, Event, RunOutcome, TelemetryRecord};

/// Line cycles run before t = 0 when a scenario starts on the cable.
const PREROLL_CYCLES: usize = 150;

#[derive(Debug, Clone, Copy)]
struct CableFix {
    point: Vec3,
    u: Vec3,
    v: Vec3,
    lateral: f64,
    vertical: f64,
}

#[derive(Debug, Clone, Copy)]
struct Shove {
    velocity: Vec3,
    remaining: f64,
}

/// Closed-loop simulation of one drone on one powerline.
pub struct Simulator {
    pub scenario: Scenario,
    clock: SimClock,
    drone: DroneState,
    battery: BatteryState,
    mmc: Mmc,
    mechanism: GripperMechanism,
    perception: Perception,
    controller: FlightController,
    maneuver: Maneuver,
    mission: Mission,
    rng: ChaCha8Rng,
    hover_power: f64,
    weight: f64,
    circuit_running: bool,
    events: Vec<Event>,
    landing_index: u32,
    landing_attempt: u32,
    ascent_time: f64,
    aborts: u32,
    fired: Vec<bool>,
    shove: Option<Shove>,
    target: Option<TargetEstimate>,
    cable: Option<CableFix>,
    last_setpoint: Option<Setpoint>,
    outcome: Option<(RunOutcome, Option<String>)>,
    stint: u64,
    script_stint: Option<u64>,
    timed: Vec<(f64, OperatorCommand)>,
    timed_next: usize,
    charging_power: f64,
    battery_power: f64,
    line_current: f64,
}

impl Simulator {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let s = &scenario;
        let clock = SimClock::new(s.clock.flight_dt, s.clock.circuit_dt)?;
        let cable = &s.world.cables[s.drone.start_cable];
        let start_pt = cable.point(s.drone.start_s)?;
        let dir = cable.tangent(s.drone.start_s);
        let yaw = (-dir.x).atan2(dir.y);
        let mut mmc = Mmc::new(s.mmc.clone(), s.circuit.clone(), s.world.line_frequency, s.clock.circuit_dt)?;
        let battery = BatteryState::new(&s.battery, s.drone.initial_soc);
        let hover = hover_power(&s.battery, s.drone.mass)?;
        let weight = s.battery.weight(s.drone.mass);
        let (drone, mechanism, mission, maneuver, running) = match s.drone.start {
            StartMode::Hovering => {
                let mut d = DroneState::hovering(start_pt - up() * s.drone.start_offset_below, s.drone.mass);
                d.yaw = yaw;
                let m = Maneuver::Hover(Hover { anchor: d.position, yaw });
                (d, GripperMechanism::default(), Mission::idle(s.mission.clone(), MissionState::Inspecting), m, false)
            }
            StartMode::Charging => {
                let (_, v) = cross_section_basis(&dir)?;
                let mut d = DroneState::hovering(start_pt - v * s.gripper.closed_offset(), s.drone.mass);
                d.yaw = yaw;
                d.armed = false;
                d.attached = true;
                d.thrust = 0.0;
                mmc.command(MmcCommand::Closed, battery.terminal_voltage);
                let ip = s.world.current_rms(0.0);
                for _ in 0..PREROLL_CYCLES * mmc.substeps_per_cycle() {
                    mmc.substep(ip, battery.terminal_voltage);
                }
                let mission = Mission::idle(s.mission.clone(), MissionState::Charging);
                (d, GripperMechanism::closed(), mission, Maneuver::Perched, true)
            }
        };
        let mut timed: Vec<(f64, OperatorCommand)> = s.operator.timed.iter().map(|c| (c.t, c.command)).collect();
        timed.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            clock,
            drone,
            battery,
            mmc,
            mechanism,
            perception: Perception::new(s.perception.clone()),
            controller: FlightController::new(&s.flight, s.clock.flight_dt)?,
            maneuver,
            mission,
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            hover_power: hover,
            weight,
            circuit_running: running,
            events: Vec::new(),
            landing_index: 0,
            landing_attempt: 0,
            ascent_time: 0.0,
            aborts: 0,
            fired: vec![false; s.disturbances.len()],
            shove: None,
            target: None,
            cable: None,
            last_setpoint: None,
            outcome: None,
            stint: 0,
            script_stint: None,
            timed,
            timed_next: 0,
            charging_power: 0.0,
            battery_power: 0.0,
            line_current: s.world.current_rms(0.0),
            scenario,
        })
    }

    pub fn t(&self) -> f64 {
        self.clock.t()
    }

    pub fn step_index(&self) -> u64 {
        self.clock.step
    }

    pub fn drone(&self) -> &DroneState {
        &self.drone
    }

    pub fn battery(&self) -> &BatteryState {
        &self.battery
    }

    pub fn mmc(&self) -> &Mmc {
        &self.mmc
    }

    pub fn mechanism(&self) -> &GripperMechanism {
        &self.mechanism
    }

    pub fn mission_state(&self) -> MissionState {
        self.mission.state()
    }

    pub fn cycles_completed(&self) -> u32 {
        self.mission.cycles_completed()
    }

    pub fn aborts(&self) -> u32 {
        self.aborts
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn outcome(&self) -> Option<RunOutcome> {
        self.outcome.as_ref().map(|o| o.0)
    }

    pub fn finished(&self) -> bool {
        self.outcome.is_some()
    }

    fn context(&self) -> MissionContext {
        MissionContext {
            t: self.clock.t(),
            terminal_voltage: self.battery.terminal_voltage,
            soc: self.battery.soc,
            can_lift_off: can_lift_off(&self.scenario.battery, self.battery.soc),
            maneuver: self.maneuver.status(),
        }
    }

    /// Apply an operator command at the current tick boundary.
    pub fn apply_command(&mut self, cmd: OperatorCommand, source: CommandSource) -> CommandAck {
        if self.outcome.is_some() {
            let ack = CommandAck { accepted: false, reason: Some("run has ended".into()) };
            return ack;
        }
        let ctx = self.context();
        let from = self.mission.state();
        let ack = self.mission.handle_command(cmd, &ctx);
        self.events.push(Event::Command { command: cmd, source, accepted: ack.accepted, reason: ack.reason.clone() });
        let to = self.mission.state();
        if to != from {
            self.on_transition(from, to);
            if to == MissionState::Halted {
                self.finish(RunOutcome::Stopped, None);
            }
        }
        ack
    }

    fn finish(&mut self, outcome: RunOutcome, reason: Option<String>) {
        if self.outcome.is_none() {
            self.events.push(Event::RunEnd { outcome, reason: reason.clone() });
            self.outcome = Some((outcome, reason));
        }
    }

    fn on_transition(&mut self, from: MissionState, to: MissionState) {
        self.stint += 1;
        self.events.push(Event::MissionTransition { from, to });
        let next = match to {
            MissionState::Inspecting => {
                // Keep the takeoff's final setpoint rather than wherever the
                // drone happened to be inside the tolerance.
                let anchor = match (&self.maneuver, self.last_setpoint) {
                    (Maneuver::Takeoff(_), Some(sp)) => sp.position,
                    _ => self.drone.position,
                };
                Maneuver::Hover(Hover { anchor, yaw: self.drone.yaw })
            }
            MissionState::LandingOnCable => {
                self.landing_index += 1;
                self.landing_attempt = 1;
                self.ascent_time = 0.0;
                self.perception.unlock();
                Maneuver::Landing(Landing::new(self.scenario.flight.landing.clone()))
            }
            MissionState::TakingOffFromCable => Maneuver::Takeoff(Takeoff::new(self.scenario.flight.takeoff.clone())),
            MissionState::Charging => Maneuver::Perched,
            MissionState::Halted | MissionState::Idle => {
                if self.drone.attached {
                    Maneuver::Perched
                } else {
                    Maneuver::Hover(Hover { anchor: self.drone.position, yaw: self.drone.yaw })
                }
            }
        };
        if let Some(k) = next.kind() {
            self.events.push(Event::ManeuverStarted { maneuver: k });
        }
        self.maneuver = next;
        self.last_setpoint = None;
        if to == MissionState::TakingOffFromCable {
            // Arm in the same tick so that no tick is disarmed outside Charging.
            let out = self.tick_maneuver();
            self.apply_outputs(out);
        }
    }

    fn run_script(&mut self) {
        let t = self.clock.t();
        if self.scenario.operator.auto_start && self.clock.step == 0 && self.mission.state() == MissionState::Idle {
            self.apply_command(OperatorCommand::Start, CommandSource::Script);
        }
        while self.timed_next < self.timed.len() && self.timed[self.timed_next].0 <= t + 1e-12 {
            let cmd = self.timed[self.timed_next].1;
            self.timed_next += 1;
            self.apply_command(cmd, CommandSource::Script);
        }
        if self.script_stint == Some(self.stint) {
            return;
        }
        let soc = self.battery.soc;
        let op = &self.scenario.operator;
        let cmd = match self.mission.state() {
            MissionState::Inspecting if op.initiate_below_soc.is_some_and(|x| soc < x) => {
                Some(OperatorCommand::InitiateCharging)
            }
            MissionState::Charging if op.interrupt_above_soc.is_some_and(|x| soc > x) => {
                Some(OperatorCommand::InterruptCharging)
            }
            _ => None,
        };
        if let Some(c) = cmd {
            self.script_stint = Some(self.stint);
            self.apply_command(c, CommandSource::Script);
        }
    }

    fn tick_maneuver(&mut self) -> crate::flight::maneuver::ManeuverOutput {
        let s = &self.scenario;
        let released = self.mmc.command_state() == MmcCommand::Open && self.mmc.mode() == MmcMode::Idle;
        let input = ManeuverInput {
            dt: self.clock.flight_dt,
            drone: self.drone,
            target: self.target,
            mechanism: self.mechanism.state,
            in_guides: self.mechanism.in_guides,
            closed_offset: s.gripper.closed_offset(),
            mmc_status: self.mmc.status(),
            mmc_released: released,
            holding_force: self.mmc.holding_force(),
            weight: self.weight,
            thrust_available: thrust_ceiling(&s.battery, self.battery.soc, s.drone.mass),
            can_lift_off: can_lift_off(&s.battery, self.battery.soc),
        };
        self.maneuver.tick(&input)
    }

    fn apply_outputs(&mut self, out: crate::flight::maneuver::ManeuverOutput) {
        let kind = self.maneuver.kind();
        for ev in out.events {
            if let ManeuverEvent::Aborted { .. } = ev {
                self.aborts += 1;
                self.landing_attempt += 1;
                self.ascent_time = 0.0;
            }
            if let Some(k) = kind {
                self.events.push(Event::Maneuver { maneuver: k, detail: ev });
            }
        }
        if let Some(a) = out.arm {
            if a != self.drone.armed {
                self.drone.armed = a;
                self.events.push(Event::Armed { armed: a });
            }
        }
        if let Some(c) = out.mmc_command {
            self.mmc.command(c, self.battery.terminal_voltage);
            self.events.push(Event::MmcCommand { command: c });
        }
        if out.detach {
            let from = self.mechanism.state;
            self.mechanism.release();
            if from != self.mechanism.state {
                self.events.push(Event::Gripper { from, to: self.mechanism.state });
            }
            self.drone.attached = false;
            self.drone.velocity = Vec3::zeros();
            self.perception.reset_odometry();
            self.events.push(Event::Detached);
        }
        if out.setpoint.is_some() {
            self.last_setpoint = out.setpoint;
        }
    }

    /// Nearest cable to the gripper mouth, in the drone-relative cross-section.
    fn locate_cable(&self) -> Result<CableFix> {
        let mouth = self.drone.position + up() * self.scenario.gripper.mouth_height;
        let mut best: Option<(f64, Vec3, Vec3)> = None;
        for c in &self.scenario.world.cables {
            let (pt, s, d) = c.nearest_point(&mouth);
            if best.map_or(true, |b| d < b.0) {
                best = Some((d, pt, c.tangent(s)));
            }
        }
        let (_, point, tangent) = best.expect("validated world has cables");
        let (u, v) = cross_section_basis(&tangent)?;
        let rel = point - self.drone.position;
        Ok(CableFix { point, u, v, lateral: rel.dot(&u), vertical: rel.dot(&v) })
    }

    fn step_flight(&mut self) -> Result<()> {
        let s = &self.scenario;
        let dt = self.clock.flight_dt;
        let sp = *self.last_setpoint.get_or_insert(Setpoint::hold(self.drone.position, self.drone.yaw));
        let (a, yaw_rate) = self.controller.track(&self.drone, &sp);
        let limits = DynamicsLimits {
            accel_limit: s.flight.mpc.accel_limit * 3f64.sqrt(),
            yaw_rate_limit: s.flight.yaw_rate_limit,
            thrust_ceiling: thrust_ceiling(&s.battery, self.battery.soc, s.drone.mass),
        };
        self.drone = step_drone(&self.drone, a, yaw_rate, dt, &limits)?;

        let ascending = matches!(self.maneuver.phase(), Some(ManeuverPhase::Ascending))
            && matches!(self.maneuver, Maneuver::Landing(_));
        if ascending {
            self.ascent_time += dt;
            for (i, d) in s.disturbances.iter().enumerate() {
                if !self.fired[i]
                    && d.landing == self.landing_index
                    && d.attempt == self.landing_attempt
                    && self.ascent_time >= d.after_ascent
                {
                    self.fired[i] = true;
                    let u = self.cable.map(|c| c.u).unwrap_or_else(|| Vec3::new(1.0, 0.0, 0.0));
                    self.shove = Some(Shove { velocity: u * (d.displacement / d.duration), remaining: d.duration });
                    self.events.push(Event::Disturbance { displacement: d.displacement });
                }
            }
        } else {
            self.ascent_time = 0.0;
        }
        if let Some(mut sh) = self.shove {
            let h = sh.remaining.min(dt);
            self.drone.position += sh.velocity * h;
            sh.remaining -= h;
            self.shove = if sh.remaining > 1e-12 { Some(sh) } else { None };
        }

        let g = s.gripper.clone();
        let fix = self.locate_cable()?;
        let before = self.mechanism;
        let input = MechanismInput {
            lateral_error: fix.lateral,
            vertical_offset: fix.vertical - g.mouth_height,
            vertical_velocity: self.drone.velocity.dot(&fix.v),
            roll_deg: 0.0,
        };
        self.mechanism = update_mechanism(&self.mechanism, &g, &input);
        let mut fix = fix;
        if self.mechanism.in_guides {
            // The guides push the cable towards the core.
            let depth = g.mouth_height - fix.vertical;
            let hw = g.guide_half_width(depth);
            let clamped = fix.lateral.clamp(-hw, hw);
            if clamped != fix.lateral {
                self.drone.position += fix.u * (fix.lateral - clamped);
                let lat_v = self.drone.velocity.dot(&fix.u);
                self.drone.velocity -= fix.u * lat_v;
                fix.lateral = clamped;
            }
        }
        if before.state != self.mechanism.state {
            self.events.push(Event::Gripper { from: before.state, to: self.mechanism.state });
        }
        let landing = matches!(self.maneuver, Maneuver::Landing(_));
        if self.mechanism.state == GripperState::Closed && landing {
            self.drone.attached = true;
            self.drone.velocity = Vec3::zeros();
            self.drone.position = fix.point - fix.v * g.closed_offset();
            fix.lateral = 0.0;
            fix.vertical = g.closed_offset();
            self.events.push(Event::Attached);
        }
        self.cable = Some(fix);
        Ok(())
    }

    fn step_circuit(&mut self) -> (f64, f64) {
        let engaged = self.mechanism.state != GripperState::Open;
        if !(engaged || self.mmc.is_active()) {
            self.circuit_running = false;
            return (0.0, 0.0);
        }
        let n_sub = self.clock.substeps_per_flight_step() as u64;
        if !self.circuit_running {
            let n = self.mmc.substeps_per_cycle() as u64;
            self.mmc.set_phase_index(((self.clock.step * n_sub) % n) as usize);
            self.circuit_running = true;
        }
        let ip = if engaged { self.line_current } else { 0.0 };
        let v = self.battery.terminal_voltage;
        let mode0 = self.mmc.mode();
        let status0 = self.mmc.status();
        let h0 = self.mmc.circuit.harvested_j;
        let d0 = self.mmc.circuit.drive_drain_j;
        for _ in 0..n_sub {
            self.mmc.substep(ip, v);
        }
        if self.mmc.mode() != mode0 {
            self.events.push(Event::MmcMode { from: mode0, to: self.mmc.mode() });
        }
        if self.mmc.status() != status0 {
            self.events.push(Event::GripperStatus { status: self.mmc.status() });
        }
        let dt = self.clock.flight_dt;
        ((self.mmc.circuit.harvested_j - h0) / dt, (self.mmc.circuit.drive_drain_j - d0) / dt)
    }

    /// Advance one flight step. Returns the telemetry record when this step
    /// is emitted.
    pub fn tick(&mut self) -> Result<Option<TelemetryRecord>> {
        if self.outcome.is_some() {
            return Ok(None);
        }
        self.line_current = self.scenario.world.current_rms(self.clock.t());
        self.run_script();

        if self.outcome.is_none() {
            if !self.drone.attached {
                self.perception.process(&self.scenario.world, &self.drone, self.drone.position, &mut self.rng)?;
                self.target = self.perception.target();
            } else {
                self.perception.reset_odometry();
                self.target = None;
            }
            let out = self.tick_maneuver();
            self.apply_outputs(out);
            if !self.drone.attached {
                self.step_flight()?;
            }
            let (harvest, drain) = self.step_circuit();
            self.charging_power = if matches!(self.mmc.mode(), MmcMode::Mode2 | MmcMode::Mode3) && self.circuit_running {
                self.mmc.last_cycle().harvested_power
            } else {
                0.0
            };
            let load = if self.drone.armed { self.hover_power } else { 0.0 };
            self.battery_power = harvest - drain - load;
            self.battery = step_battery(&self.battery, &self.scenario.battery, self.battery_power, self.clock.flight_dt);

            if self.drone.attached && !self.drone.armed && self.mmc.holding_force() < self.weight {
                self.finish(RunOutcome::Failed, Some("holding force fell below weight".into()));
            } else if !self.drone.attached && self.drone.position.z <= 0.0 {
                self.finish(RunOutcome::Failed, Some("drone reached the ground".into()));
            }
        }

        self.clock.advance();
        if self.outcome.is_none() {
            let ctx = self.context();
            let from = self.mission.state();
            if let Some(to) = self.mission.step(&ctx) {
                self.on_transition(from, to);
                if to == MissionState::Halted {
                    self.finish(RunOutcome::Completed, None);
                }
            }
        }
        if self.outcome.is_none() && self.clock.t() >= self.scenario.duration - 1e-9 {
            self.finish(RunOutcome::DurationElapsed, None);
        }
        let emit = !self.events.is_empty() || self.clock.step % self.scenario.telemetry.decimation as u64 == 0;
        if !emit {
            return Ok(None);
        }
        let events = std::mem::take(&mut self.events);
        Ok(Some(self.record(events)))
    }

    /// Current state as a record without events.
    pub fn snapshot(&self) -> TelemetryRecord {
        self.record(Vec::new())
    }

    fn record(&self, events: Vec<Event>) -> TelemetryRecord {
        let d = &self.drone;
        let (ws, ww) = self.mmc.window().degrees();
        let (cl, cv) = match (self.drone.attached, self.cable) {
            (true, _) => (0.0, self.scenario.gripper.closed_offset()),
            (false, Some(c)) => (c.lateral, c.vertical),
            (false, None) => (f64::NAN, f64::NAN),
        };
        TelemetryRecord {
            step: self.clock.step,
            t: self.clock.t(),
            mission_state: self.mission.state(),
            position: [d.position.x, d.position.y, d.position.z],
            velocity: [d.velocity.x, d.velocity.y, d.velocity.z],
            yaw: d.yaw,
            altitude: d.position.z,
            armed: d.armed,
            attached: d.attached,
            battery_voltage: self.battery.terminal_voltage,
            soc: self.battery.soc,
            charging_power: self.charging_power,
            battery_power: self.battery_power,
            mmc_mode: self.mmc.mode(),
            mmc_command: self.mmc.command_state(),
            gripper_status: self.mmc.status(),
            gripper: self.mechanism.state,
            holding_force: self.mmc.holding_force(),
            line_current: self.line_current,
            window_start_deg: ws,
            window_width_deg: ww,
            maneuver: self.maneuver.kind(),
            maneuver_phase: self.maneuver.phase(),
            landing_index: self.landing_index,
            landing_attempt: self.landing_attempt,
            target_lateral: self.target.map(|t| t.lateral),
            target_vertical: self.target.map(|t| t.vertical),
            cable_lateral: if cl.is_finite() { cl } else { 0.0 },
            cable_vertical: if cv.is_finite() { cv } else { 0.0 },
            confirmed_tracks: self.perception.confirmed_count(),
            cycles_completed: self.mission.cycles_completed(),
            aborts: self.aborts,
            energy_in_wh: self.battery.energy_in_j / 3600.0,
            energy_out_wh: self.battery.energy_out_j / 3600.0,
            events,
        }
    }

    /// Step until the run ends, handing every emitted record to `sink`.
    pub fn run<F>(&mut self, mut sink: F) -> Result<RunOutcome>
    where
        F: FnMut(&TelemetryRecord) -> Result<()>,
    {
        while self.outcome.is_none() {
            if let Some(r) = self.tick()? {
                sink(&r)?;
            }
        }
        Ok(self.outcome.as_ref().expect("finished").0)
    }

    pub fn failure_reason(&self) -> Option<&str> {
        self.outcome.as_ref().and_then(|o| o.1.as_deref())
    }

    pub fn maneuver_status(&self) -> ManeuverStatus {
        self.maneuver.status()
    }

    pub fn gripper_status(&self) -> GripperStatus {
        self.mmc.status()
    }
}
