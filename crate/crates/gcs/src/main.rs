use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use perchsim_core::report::{write_extracts, write_sweep_csv};
use perchsim_core::summary::RunSummary;
use perchsim_core::sweep::{linear_fit, sweep_charging, SweepConfig};
use perchsim_core::telemetry::{parse_jsonl, JsonlWriter, RunOutcome};
use perchsim_core::{Scenario, Simulator};
use perchsim_gcs::{router, spawn_simulation, ServiceConfig};

const TELEMETRY_FILE: &str = "telemetry.jsonl";

#[derive(Parser)]
#[command(name = "perchsim", version, about = "Closed-loop simulator of a powerline-perching drone")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to completion and write telemetry plus extracts.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the simulated duration, s.
        #[arg(long)]
        duration: Option<f64>,
        /// Simulated seconds per wall second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speedup: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve the HTTP interface; the mission waits for a `start` command.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 1.0)]
        speedup: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the full telemetry log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Sweep steady-state charging power over line current.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma separated RMS currents, A.
        #[arg(long, value_delimiter = ',')]
        currents: Option<Vec<f64>>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Rebuild extracts and the summary from a telemetry log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the default scenario as JSON.
    DefaultConfig,
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario> {
    Ok(match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    })
}

fn print_summary(s: &RunSummary) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(s)?);
    Ok(())
}

fn replay(log: &Path, out: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
    let records = parse_jsonl(&text)?;
    Ok(write_extracts(&records, out)?)
}

fn cmd_run(
    config: Option<PathBuf>,
    duration: Option<f64>,
    speedup: f64,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<RunOutcome> {
    let mut scenario = load_scenario(config.as_deref())?;
    if let Some(d) = duration {
        scenario.duration = d;
    }
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate()?;
    fs::create_dir_all(&out)?;
    let log_path = out.join(TELEMETRY_FILE);
    let mut writer = JsonlWriter::new(BufWriter::new(fs::File::create(&log_path)?));
    let mut sim = Simulator::new(scenario)?;
    let wall0 = Instant::now();
    let outcome = sim.run(|r| {
        writer.write(r)?;
        if speedup > 0.0 {
            let target = Duration::from_secs_f64(r.t / speedup);
            let elapsed = wall0.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
        Ok(())
    })?;
    writer.flush()?;
    drop(writer);
    // Extracts go through the same path as `replay` so both agree byte for byte.
    let summary = replay(&log_path, &out)?;
    print_summary(&summary)?;
    if let Some(reason) = sim.failure_reason() {
        eprintln!("run failed: {reason}");
    }
    Ok(outcome)
}

fn cmd_serve(
    config: Option<PathBuf>,
    bind: String,
    port: u16,
    speedup: f64,
    seed: Option<u64>,
    log: Option<PathBuf>,
) -> Result<()> {
    let mut scenario = load_scenario(config.as_deref())?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if !(speedup >= 0.0 && speedup.is_finite()) {
        anyhow::bail!("speedup must be a non-negative number");
    }
    let sink: Option<Box<dyn Write + Send>> = match log {
        Some(p) => Some(Box::new(BufWriter::new(fs::File::create(&p)?))),
        None => None,
    };
    let handle = spawn_simulation(
        scenario,
        ServiceConfig { speedup, ..ServiceConfig::default() },
        sink,
    )?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((bind.as_str(), port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(handle)).await?;
        Ok(())
    })
}

fn cmd_sweep(
    config: Option<PathBuf>,
    currents: Option<Vec<f64>>,
    warmup: Option<usize>,
    out: PathBuf,
) -> Result<()> {
    let scenario = load_scenario(config.as_deref())?;
    let mut cfg = SweepConfig::default();
    if let Some(c) = currents {
        cfg.currents = c;
    }
    if let Some(w) = warmup {
        cfg.warmup_cycles = w;
    }
    let points = sweep_charging(
        &scenario.circuit,
        &scenario.mmc,
        &scenario.battery,
        scenario.world.line_frequency,
        scenario.clock.circuit_dt,
        &cfg,
    )?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_sweep_csv(&points, fs::File::create(&out)?)?;
    for p in &points {
        println!(
            "{:8.1} A  {:8.2} W  {:8.1} min  window {:6.1}+{:5.1} deg",
            p.ip_rms, p.power_w, p.charge_time_min, p.window_start_deg, p.window_width_deg
        );
    }
    if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.ip_rms).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.power_w).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        println!("fit: P = {a:.3} + {b:.5} * I  (r2 {r2:.4})");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, duration, speedup, seed, out } => {
            cmd_run(config, duration, speedup, seed, out).map(|o| o == RunOutcome::Failed)
        }
        Cmd::Serve { config, port, bind, speedup, seed, log } => {
            cmd_serve(config, bind, port, speedup, seed, log).map(|_| false)
        }
        Cmd::Sweep { config, currents, warmup, out } => cmd_sweep(config, currents, warmup, out).map(|_| false),
        Cmd::Replay { log, out } => replay(&log, &out).and_then(|s| print_summary(&s)).map(|_| false),
        Cmd::DefaultConfig => {
            println!("{}", Scenario::default().to_json_pretty());
            Ok(false)
        }
    };
    match res {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
