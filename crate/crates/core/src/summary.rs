use serde::{Deserialize, Serialize};

use crate::mission::MissionState;
use crate::telemetry::{Event, RunOutcome, TelemetryRecord};

/// One inspection/charging cycle, from the start of an inspection flight to
/// the return to inspection after taking off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub index: u32,
    pub start_t: f64,
    pub end_t: f64,
    pub flight_duration: f64,
    pub charge_duration: f64,
    pub energy_in_wh: f64,
    pub energy_out_wh: f64,
    pub min_voltage: f64,
    pub max_voltage: f64,
    /// Lowest voltage seen while airborne.
    pub min_flight_voltage: f64,
    pub min_soc: f64,
    pub max_soc: f64,
    pub mean_charging_power: f64,
    pub aborts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: u64,
    pub duration: f64,
    pub cycles_completed: u32,
    pub aborts: u32,
    pub landings: u32,
    pub min_soc: f64,
    /// Lowest state of charge while airborne, if the drone flew.
    pub min_airborne_soc: Option<f64>,
    pub min_voltage: f64,
    pub max_voltage: f64,
    pub energy_in_wh: f64,
    pub energy_out_wh: f64,
    pub outcome: Option<RunOutcome>,
    pub failure_reason: Option<String>,
    pub cycles: Vec<CycleSummary>,
}

#[derive(Debug, Clone)]
struct OpenCycle {
    start_t: f64,
    e_in0: f64,
    e_out0: f64,
    aborts0: u32,
    flight: f64,
    charge: f64,
    min_v: f64,
    max_v: f64,
    min_flight_v: f64,
    min_soc: f64,
    max_soc: f64,
}

impl OpenCycle {
    fn start(r: &TelemetryRecord) -> Self {
        Self {
            start_t: r.t,
            e_in0: r.energy_in_wh,
            e_out0: r.energy_out_wh,
            aborts0: r.aborts,
            flight: 0.0,
            charge: 0.0,
            min_v: f64::INFINITY,
            max_v: f64::NEG_INFINITY,
            min_flight_v: f64::INFINITY,
            min_soc: f64::INFINITY,
            max_soc: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, r: &TelemetryRecord) {
        self.min_v = self.min_v.min(r.battery_voltage);
        self.max_v = self.max_v.max(r.battery_voltage);
        if !r.attached {
            self.min_flight_v = self.min_flight_v.min(r.battery_voltage);
        }
        self.min_soc = self.min_soc.min(r.soc);
        self.max_soc = self.max_soc.max(r.soc);
    }
}

/// Incremental summary over a stream of records. Feeding the same records
/// always gives the same summary, so live and replayed summaries agree.
#[derive(Debug, Clone, Default)]
pub struct SummaryBuilder {
    records: u64,
    first_t: Option<f64>,
    last: Option<TelemetryRecord>,
    min_soc: f64,
    min_airborne_soc: Option<f64>,
    min_v: f64,
    max_v: f64,
    landings: u32,
    outcome: Option<RunOutcome>,
    failure: Option<String>,
    open: Option<OpenCycle>,
    cycles: Vec<CycleSummary>,
}

impl SummaryBuilder {
    pub fn new() -> Self {
        Self { min_soc: f64::INFINITY, min_v: f64::INFINITY, max_v: f64::NEG_INFINITY, ..Default::default() }
    }

    pub fn push(&mut self, r: &TelemetryRecord) {
        self.records += 1;
        self.first_t.get_or_insert(r.t);
        self.min_soc = self.min_soc.min(r.soc);
        self.min_v = self.min_v.min(r.battery_voltage);
        self.max_v = self.max_v.max(r.battery_voltage);
        if !r.attached && r.altitude > 0.0 {
            self.min_airborne_soc = Some(self.min_airborne_soc.map_or(r.soc, |m| m.min(r.soc)));
        }
        self.landings = self.landings.max(r.landing_index);
        for e in &r.events {
            if let Event::RunEnd { outcome, reason } = e {
                self.outcome = Some(*outcome);
                self.failure = reason.clone();
            }
        }
        if let (Some(prev), Some(open)) = (&self.last, self.open.as_mut()) {
            let dt = r.t - prev.t;
            if prev.mission_state == MissionState::Charging {
                open.charge += dt;
            } else if !prev.attached {
                open.flight += dt;
            }
        }
        let completed = self.last.as_ref().is_some_and(|p| r.cycles_completed > p.cycles_completed);
        if completed {
            if let Some(mut open) = self.open.take() {
                open.observe(r);
                let e_in = r.energy_in_wh - open.e_in0;
                self.cycles.push(CycleSummary {
                    index: self.cycles.len() as u32 + 1,
                    start_t: open.start_t,
                    end_t: r.t,
                    flight_duration: open.flight,
                    charge_duration: open.charge,
                    energy_in_wh: e_in,
                    energy_out_wh: r.energy_out_wh - open.e_out0,
                    min_voltage: open.min_v,
                    max_voltage: open.max_v,
                    min_flight_voltage: open.min_flight_v,
                    min_soc: open.min_soc,
                    max_soc: open.max_soc,
                    mean_charging_power: if open.charge > 0.0 { e_in * 3600.0 / open.charge } else { 0.0 },
                    aborts: r.aborts - open.aborts0,
                });
            }
        }
        if self.open.is_none() && !matches!(r.mission_state, MissionState::Idle | MissionState::Halted) {
            self.open = Some(OpenCycle::start(r));
        }
        if let Some(open) = self.open.as_mut() {
            open.observe(r);
        }
        self.last = Some(r.clone());
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.last.as_ref();
        RunSummary {
            records: self.records,
            duration: last.map_or(0.0, |l| l.t - self.first_t.unwrap_or(0.0)),
            cycles_completed: last.map_or(0, |l| l.cycles_completed),
            aborts: last.map_or(0, |l| l.aborts),
            landings: self.landings,
            min_soc: if self.records > 0 { self.min_soc } else { 0.0 },
            min_airborne_soc: self.min_airborne_soc,
            min_voltage: if self.records > 0 { self.min_v } else { 0.0 },
            max_voltage: if self.records > 0 { self.max_v } else { 0.0 },
            energy_in_wh: last.map_or(0.0, |l| l.energy_in_wh),
            energy_out_wh: last.map_or(0.0, |l| l.energy_out_wh),
            outcome: self.outcome,
            failure_reason: self.failure.clone(),
            cycles: self.cycles.clone(),
        }
    }
}

pub fn summarize(records: &[TelemetryRecord]) -> RunSummary {
    let mut b = SummaryBuilder::new();
    for r in records {
        b.push(r);
    }
    b.summary()
}
