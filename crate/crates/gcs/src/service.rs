use std::io::Write;
use std::sync::mpsc::{self, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot, watch};

use perchsim_core::mission::{CommandAck, OperatorCommand};
use perchsim_core::summary::{RunSummary, SummaryBuilder};
use perchsim_core::telemetry::{CommandSource, JsonlWriter, TelemetryRecord};
use perchsim_core::{Scenario, Simulator};

pub const COMMAND_QUEUE: usize = 64;
pub const STREAM_BUFFER: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandBody {
    pub command: OperatorCommand,
}

struct CommandRequest {
    command: OperatorCommand,
    reply: oneshot::Sender<CommandAck>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Simulated seconds per wall second; 0 runs unthrottled.
    pub speedup: f64,
    /// Wall-clock interval between stream frames.
    pub stream_period: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { speedup: 1.0, stream_period: Duration::from_millis(100) }
    }
}

/// Handles onto the simulation thread. Everything crossing the boundary is
/// a message: commands in through a bounded queue, snapshots and frames out.
#[derive(Clone)]
pub struct SimHandle {
    commands: SyncSender<CommandRequest>,
    state: watch::Receiver<Arc<TelemetryRecord>>,
    summary: watch::Receiver<Arc<RunSummary>>,
    stream: broadcast::Sender<Arc<String>>,
}

impl SimHandle {
    pub fn state(&self) -> Arc<TelemetryRecord> {
        self.state.borrow().clone()
    }

    pub fn summary(&self) -> Arc<RunSummary> {
        self.summary.borrow().clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<String>> {
        self.stream.subscribe()
    }

    /// Queue a command and wait for the simulation thread to consume it.
    pub async fn command(&self, command: OperatorCommand) -> Result<CommandAck, &'static str> {
        let (tx, rx) = oneshot::channel();
        match self.commands.try_send(CommandRequest { command, reply: tx }) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => return Err("command queue full"),
            Err(TrySendError::Disconnected(_)) => return Err("simulation stopped"),
        }
        match tokio::time::timeout(Duration::from_secs(10), rx).await {
            Ok(Ok(ack)) => Ok(ack),
            _ => Err("simulation did not answer"),
        }
    }
}

/// Start the simulation thread. Stepping begins once a `start` command is
/// accepted; until then the state is the initial snapshot.
pub fn spawn_simulation(
    mut scenario: Scenario,
    cfg: ServiceConfig,
    mut log: Option<Box<dyn Write + Send>>,
) -> perchsim_core::Result<SimHandle> {
    scenario.operator.auto_start = false;
    let mut sim = Simulator::new(scenario)?;
    let (cmd_tx, cmd_rx) = mpsc::sync_channel::<CommandRequest>(COMMAND_QUEUE);
    let (state_tx, state_rx) = watch::channel(Arc::new(sim.snapshot()));
    let (summary_tx, summary_rx) = watch::channel(Arc::new(SummaryBuilder::new().summary()));
    let (stream_tx, _) = broadcast::channel::<Arc<String>>(STREAM_BUFFER);
    let stream = stream_tx.clone();

    thread::spawn(move || {
        let mut builder = SummaryBuilder::new();
        let mut writer = log.take().map(JsonlWriter::new);
        let mut running = false;
        let mut pending_events = Vec::new();
        let mut last_frame = Instant::now();
        let mut wall0 = Instant::now();
        let mut sim_t0 = 0.0;
        loop {
            // Commands are consumed at tick boundaries.
            loop {
                let req = if running && !sim.finished() {
                    match cmd_rx.try_recv() {
                        Ok(r) => r,
                        Err(mpsc::TryRecvError::Empty) => break,
                        Err(mpsc::TryRecvError::Disconnected) => return,
                    }
                } else {
                    match cmd_rx.recv_timeout(Duration::from_millis(20)) {
                        Ok(r) => r,
                        Err(RecvTimeoutError::Timeout) => break,
                        Err(RecvTimeoutError::Disconnected) => return,
                    }
                };
                let ack = sim.apply_command(req.command, CommandSource::Operator);
                if ack.accepted && req.command == OperatorCommand::Start {
                    running = true;
                    wall0 = Instant::now();
                    sim_t0 = sim.t();
                }
                let _ = req.reply.send(ack);
                if !running || sim.finished() {
                    // Publish the command event right away while not stepping.
                    let snap = sim.snapshot();
                    let _ = state_tx.send(Arc::new(snap));
                }
            }
            if !running || sim.finished() {
                continue;
            }
            let rec = match sim.tick() {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("simulation error: {e}");
                    return;
                }
            };
            if let Some(rec) = rec {
                builder.push(&rec);
                if let Some(w) = writer.as_mut() {
                    if w.write(&rec).is_err() {
                        writer = None;
                    }
                }
                pending_events.extend(rec.events.iter().cloned());
                let finished = sim.finished();
                if finished {
                    if let Some(w) = writer.as_mut() {
                        let _ = w.flush();
                    }
                }
                let _ = state_tx.send(Arc::new(rec.clone()));
                if finished || last_frame.elapsed() >= cfg.stream_period {
                    let mut frame = rec;
                    frame.events = std::mem::take(&mut pending_events);
                    if let Ok(line) = serde_json::to_string(&frame) {
                        let _ = stream.send(Arc::new(line));
                    }
                    let _ = summary_tx.send(Arc::new(builder.summary()));
                    last_frame = Instant::now();
                }
            }
            if cfg.speedup > 0.0 {
                let target = Duration::from_secs_f64(((sim.t() - sim_t0) / cfg.speedup).max(0.0));
                let elapsed = wall0.elapsed();
                if target > elapsed {
                    thread::sleep(target - elapsed);
                }
            }
        }
    });

    Ok(SimHandle { commands: cmd_tx, state: state_rx, summary: summary_rx, stream: stream_tx })
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

async fn get_state(State(h): State<SimHandle>) -> Json<TelemetryRecord> {
    Json((*h.state()).clone())
}

async fn get_summary(State(h): State<SimHandle>) -> Json<RunSummary> {
    Json((*h.summary()).clone())
}

async fn post_command(State(h): State<SimHandle>, body: Result<Json<CommandBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    match h.command(body.command).await {
        Ok(ack) => Json(ack).into_response(),
        Err(msg) => error(StatusCode::SERVICE_UNAVAILABLE, msg),
    }
}

async fn get_stream(State(h): State<SimHandle>) -> Response {
    let rx = h.subscribe();
    let s = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(line) => {
                    let mut bytes = line.as_bytes().to_vec();
                    bytes.push(b'\n');
                    return Some((Ok::<_, std::io::Error>(bytes), rx));
                }
                // A slow reader loses the oldest frames and carries on.
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(s))
        .expect("valid response")
}

pub fn router(handle: SimHandle) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/summary", get(get_summary))
        .route("/stream", get(get_stream))
        .route("/command", post(post_command))
        .with_state(handle)
}
