use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SimError};
use crate::flight::maneuver::ManeuverKind;
use crate::summary::{summarize, RunSummary};
use crate::sweep::SweepPoint;
use crate::telemetry::TelemetryRecord;

pub const ALTITUDE_CSV: &str = "altitude.csv";
pub const POWER_CSV: &str = "power.csv";
pub const LANDINGS_CSV: &str = "landings.csv";
pub const CYCLES_CSV: &str = "cycles.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn writer<W: Write>(mut out: W, kind: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "# schema: {kind}/v1")?;
    Ok(csv::Writer::from_writer(out))
}

fn label<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn write_altitude_csv<W: Write>(records: &[TelemetryRecord], out: W) -> Result<()> {
    let mut w = writer(out, "altitude")?;
    w.write_record(["t", "altitude", "mission_state", "attached"])?;
    for r in records {
        w.write_record([r.t.to_string(), r.altitude.to_string(), label(&r.mission_state), r.attached.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_csv<W: Write>(records: &[TelemetryRecord], out: W) -> Result<()> {
    let mut w = writer(out, "power")?;
    w.write_record(["t", "battery_voltage", "soc", "charging_power", "battery_power", "mmc_mode"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.battery_voltage.to_string(),
            r.soc.to_string(),
            r.charging_power.to_string(),
            r.battery_power.to_string(),
            format!("{:?}", r.mmc_mode),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_landings_csv<W: Write>(records: &[TelemetryRecord], out: W) -> Result<()> {
    let mut w = writer(out, "landings")?;
    w.write_record(["landing", "attempt", "t", "x", "y", "z", "cable_lateral", "cable_vertical", "phase"])?;
    for r in records.iter().filter(|r| r.maneuver == Some(ManeuverKind::Landing)) {
        w.write_record([
            r.landing_index.to_string(),
            r.landing_attempt.to_string(),
            r.t.to_string(),
            r.position[0].to_string(),
            r.position[1].to_string(),
            r.position[2].to_string(),
            r.cable_lateral.to_string(),
            r.cable_vertical.to_string(),
            r.maneuver_phase.as_ref().map(label).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cycles_csv<W: Write>(summary: &RunSummary, out: W) -> Result<()> {
    let mut w = writer(out, "cycles")?;
    w.write_record([
        "cycle",
        "start_t",
        "end_t",
        "flight_s",
        "charge_s",
        "energy_in_wh",
        "energy_out_wh",
        "min_voltage",
        "max_voltage",
        "min_flight_voltage",
        "min_soc",
        "max_soc",
        "mean_charging_power",
        "aborts",
    ])?;
    for c in &summary.cycles {
        w.write_record([
            c.index.to_string(),
            c.start_t.to_string(),
            c.end_t.to_string(),
            c.flight_duration.to_string(),
            c.charge_duration.to_string(),
            c.energy_in_wh.to_string(),
            c.energy_out_wh.to_string(),
            c.min_voltage.to_string(),
            c.max_voltage.to_string(),
            c.min_flight_voltage.to_string(),
            c.min_soc.to_string(),
            c.max_soc.to_string(),
            c.mean_charging_power.to_string(),
            c.aborts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = writer(out, "sweep")?;
    w.write_record(["ip_rms_a", "power_w", "charge_time_min", "window_start_deg", "window_width_deg", "holding_force_n"])?;
    for p in points {
        w.write_record([
            p.ip_rms.to_string(),
            p.power_w.to_string(),
            p.charge_time_min.to_string(),
            p.window_start_deg.to_string(),
            p.window_width_deg.to_string(),
            p.holding_force.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &RunSummary) -> Result<String> {
    serde_json::to_string_pretty(summary).map_err(|e| SimError::Io(e.to_string()))
}

/// Write every extract for a log into `dir`. Used both after a run and when
/// replaying a log, so the two produce identical files.
pub fn write_extracts(records: &[TelemetryRecord], dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let summary = summarize(records);
    write_altitude_csv(records, fs::File::create(dir.join(ALTITUDE_CSV))?)?;
    write_power_csv(records, fs::File::create(dir.join(POWER_CSV))?)?;
    write_landings_csv(records, fs::File::create(dir.join(LANDINGS_CSV))?)?;
    write_cycles_csv(&summary, fs::File::create(dir.join(CYCLES_CSV))?)?;
    fs::write(dir.join(SUMMARY_JSON), summary_json(&summary)? + "\n")?;
    Ok(summary)
}
