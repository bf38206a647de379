use std::time::Duration;

use perchsim_core::mission::{CommandAck, MissionState};
use perchsim_core::scenario::StartMode;
use perchsim_core::summary::{summarize, RunSummary};
use perchsim_core::telemetry::{parse_jsonl, RunOutcome, TelemetryRecord};
use perchsim_core::Scenario;
use perchsim_gcs::{router, spawn_simulation, ServiceConfig};
use serde_json::{json, Value};

async fn serve(scenario: Scenario, speedup: f64, log: Option<std::fs::File>) -> String {
    let sink: Option<Box<dyn std::io::Write + Send>> = log.map(|f| Box::new(f) as _);
    let handle = spawn_simulation(scenario, ServiceConfig { speedup, ..ServiceConfig::default() }, sink).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(handle)).await.unwrap();
    });
    format!("http://{addr}")
}

async fn state(c: &reqwest::Client, base: &str) -> TelemetryRecord {
    c.get(format!("{base}/state")).send().await.unwrap().json().await.unwrap()
}

async fn command(c: &reqwest::Client, base: &str, cmd: &str) -> (u16, Value) {
    let r = c.post(format!("{base}/command")).json(&json!({ "command": cmd })).send().await.unwrap();
    let status = r.status().as_u16();
    (status, r.json().await.unwrap())
}

async fn wait_for<F: Fn(&TelemetryRecord) -> bool>(c: &reqwest::Client, base: &str, f: F) -> TelemetryRecord {
    for _ in 0..500 {
        let s = state(c, base).await;
        if f(&s) {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("condition not reached");
}

fn charging_start(soc: f64) -> Scenario {
    let mut s = Scenario::default();
    s.drone.start = StartMode::Charging;
    s.drone.initial_soc = soc;
    s
}

#[tokio::test(flavor = "multi_thread")]
async fn idle_until_start_then_inspecting() {
    let base = serve(Scenario::default(), 1.0, None).await;
    let c = reqwest::Client::new();
    let s0 = state(&c, &base).await;
    assert_eq!(s0.mission_state, MissionState::Idle);
    assert_eq!(s0.step, 0);
    tokio::time::sleep(Duration::from_millis(100)).await;
    assert_eq!(state(&c, &base).await.step, 0, "simulation must not advance before start");

    let (code, ack) = command(&c, &base, "start").await;
    assert_eq!(code, 200);
    assert_eq!(ack["accepted"], true);
    let s = wait_for(&c, &base, |s| s.step > 0).await;
    assert_eq!(s.mission_state, MissionState::Inspecting);

    let (_, again) = command(&c, &base, "start").await;
    assert_eq!(again["accepted"], false);
    assert!(again["reason"].is_string());
}

#[tokio::test(flavor = "multi_thread")]
async fn initiate_charging_accepted_while_inspecting() {
    let base = serve(Scenario::default(), 1.0, None).await;
    let c = reqwest::Client::new();
    assert_eq!(command(&c, &base, "start").await.1["accepted"], true);
    let (code, ack) = command(&c, &base, "initiate_charging").await;
    assert_eq!(code, 200);
    let ack: CommandAck = serde_json::from_value(ack).unwrap();
    assert!(ack.accepted, "{ack:?}");
    wait_for(&c, &base, |s| s.mission_state == MissionState::LandingOnCable).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn interrupt_rejected_below_takeoff_charge() {
    let base = serve(charging_start(0.44), 1.0, None).await;
    let c = reqwest::Client::new();
    assert_eq!(state(&c, &base).await.mission_state, MissionState::Idle);
    assert_eq!(command(&c, &base, "start").await.1["accepted"], true);
    wait_for(&c, &base, |s| s.mission_state == MissionState::Charging).await;
    let (code, ack) = command(&c, &base, "interrupt_charging").await;
    assert_eq!(code, 200);
    assert_eq!(ack["accepted"], false);
    assert!(ack["reason"].as_str().unwrap().contains("below"), "{ack}");
    let s = state(&c, &base).await;
    assert_eq!(s.mission_state, MissionState::Charging);
    assert!(s.attached && !s.armed);
}

#[tokio::test(flavor = "multi_thread")]
async fn interrupt_accepted_when_charged() {
    let base = serve(charging_start(0.95), 1.0, None).await;
    let c = reqwest::Client::new();
    command(&c, &base, "start").await;
    wait_for(&c, &base, |s| s.mission_state == MissionState::Charging).await;
    let (_, ack) = command(&c, &base, "interrupt_charging").await;
    assert_eq!(ack["accepted"], true, "{ack}");
    let s = wait_for(&c, &base, |s| s.mission_state != MissionState::Charging).await;
    assert_eq!(s.mission_state, MissionState::TakingOffFromCable);
    assert!(s.armed);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_commands_are_client_errors() {
    let base = serve(Scenario::default(), 1.0, None).await;
    let c = reqwest::Client::new();
    let bad = [
        c.post(format!("{base}/command")).body("not json").header("content-type", "application/json"),
        c.post(format!("{base}/command")).json(&json!({ "command": "self_destruct" })),
        c.post(format!("{base}/command")).json(&json!({ "cmd": "start" })),
        c.post(format!("{base}/command")).body(r#"{"command":"start"}"#),
    ];
    for req in bad {
        let r = req.send().await.unwrap();
        assert!(r.status().is_client_error(), "{}", r.status());
    }
    assert_eq!(state(&c, &base).await.mission_state, MissionState::Idle);
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_emits_records() {
    let base = serve(Scenario::default(), 5.0, None).await;
    let c = reqwest::Client::new();
    let mut resp = c.get(format!("{base}/stream")).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    command(&c, &base, "start").await;
    let mut buf = Vec::new();
    let mut lines = Vec::new();
    while lines.len() < 3 {
        let chunk = tokio::time::timeout(Duration::from_secs(5), resp.chunk()).await.unwrap().unwrap().unwrap();
        buf.extend_from_slice(&chunk);
        while let Some(i) = buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = buf.drain(..=i).collect();
            lines.push(serde_json::from_slice::<TelemetryRecord>(&line[..line.len() - 1]).unwrap());
        }
    }
    assert!(lines.windows(2).all(|w| w[1].t > w[0].t));
}

#[tokio::test(flavor = "multi_thread")]
async fn summary_matches_recomputation_from_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("telemetry.jsonl");
    let mut sc = Scenario::default();
    sc.duration = 3.0;
    let base = serve(sc, 0.0, Some(std::fs::File::create(&log).unwrap())).await;
    let c = reqwest::Client::new();
    command(&c, &base, "start").await;
    let mut summary: Option<RunSummary> = None;
    for _ in 0..500 {
        let s: RunSummary = c.get(format!("{base}/summary")).send().await.unwrap().json().await.unwrap();
        if s.outcome.is_some() {
            summary = Some(s);
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let summary = summary.expect("run finished");
    assert_eq!(summary.outcome, Some(RunOutcome::DurationElapsed));
    let records = parse_jsonl(&std::fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(records.len() as u64, summary.records);
    let recomputed = summarize(&records);
    assert_eq!(serde_json::to_value(&recomputed).unwrap(), serde_json::to_value(&summary).unwrap());
    // Commands after the run ends are answered, not queued forever.
    let (code, ack) = command(&c, &base, "stop").await;
    assert_eq!(code, 200);
    assert_eq!(ack["accepted"], false);
}
