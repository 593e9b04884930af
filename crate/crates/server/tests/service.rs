use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use pamon_core::session::{
    read_session, ClientMessage, CommandKind, ControlCommand, ServerBody, ServerMessage,
    SessionState, TelemetryRecord,
};
use pamon_server::{serve, ServerConfig};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Service {
    addr: SocketAddr,
    records: tempfile::TempDir,
    http: reqwest::Client,
}

async fn start() -> Service {
    let records = tempfile::tempdir().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let cfg = ServerConfig {
        listen: addr,
        record_dir: Some(records.path().to_path_buf()),
        time_scale: 25.0,
        tick_interval: Duration::from_millis(10),
        ..ServerConfig::default()
    };
    tokio::spawn(serve(cfg, listener, std::future::pending()));
    Service {
        addr,
        records,
        http: reqwest::Client::new(),
    }
}

impl Service {
    async fn create(&self, scenario: &str, seed: u64) -> reqwest::Response {
        self.http
            .post(format!("http://{}/sessions", self.addr))
            .json(&json!({ "scenario": scenario, "seed": seed }))
            .send()
            .await
            .unwrap()
    }

    async fn session(&self, scenario: &str, seed: u64) -> String {
        let v: Value = self.create(scenario, seed).await.json().await.unwrap();
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn connect(&self, id: &str, after: u64) -> Ws {
        let url = format!("ws://{}/sessions/{id}/ws?after={after}", self.addr);
        connect_async(url).await.unwrap().0
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.records.path().join(format!("{id}.jsonl"))
    }
}

async fn send(ws: &mut Ws, id: &str, seq: u64, command: ControlCommand) {
    let line = ClientMessage {
        seq,
        session_id: id.into(),
        command,
    }
    .to_line();
    ws.send(Message::text(line)).await.unwrap();
}

async fn next(ws: &mut Ws) -> ServerMessage {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("timed out waiting for a message")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = frame {
            assert!(!t.trim_end().contains('\n'));
            return ServerMessage::parse_line(&t).unwrap();
        }
    }
}

/// Reads until `pred` matches, returning everything read including the match.
async fn until(ws: &mut Ws, pred: impl Fn(&ServerMessage) -> bool) -> Vec<ServerMessage> {
    let mut out = Vec::new();
    loop {
        let m = next(ws).await;
        let done = pred(&m);
        out.push(m);
        if done {
            return out;
        }
    }
}

fn telemetry(msgs: &[ServerMessage]) -> Vec<TelemetryRecord> {
    msgs.iter()
        .filter_map(|m| match &m.body {
            ServerBody::Telemetry { record } => Some(record.clone()),
            _ => None,
        })
        .collect()
}

fn is_ack(seq: u64) -> impl Fn(&ServerMessage) -> bool {
    move |m| matches!(m.body, ServerBody::Ack { command_seq, .. } if command_seq == seq)
}

fn error_code(m: &ServerMessage) -> Option<&str> {
    match &m.body {
        ServerBody::Error { code, .. } => Some(code),
        _ => None,
    }
}

#[tokio::test]
async fn scenarios_and_unknown_session() {
    let svc = start().await;
    let names: Vec<String> = svc
        .http
        .get(format!("http://{}/scenarios", svc.addr))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(names.iter().any(|n| n == "phantom_tattoo"));
    assert_eq!(svc.create("no_such_scenario", 0).await.status(), 404);
    let r = svc
        .http
        .get(format!("http://{}/sessions/nope", svc.addr))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 404);
}

#[tokio::test]
async fn laser_session_streams_and_records() {
    let svc = start().await;
    let id = svc.session("phantom_tattoo", 7).await;
    let mut ws = svc.connect(&id, 0).await;
    let first = next(&mut ws).await;
    assert_eq!(first.seq, 1);
    assert!(matches!(first.body, ServerBody::State { state: SessionState::Idle, laser_on: false, .. }));

    send(&mut ws, &id, 1, ControlCommand::new(CommandKind::LaserOn)).await;
    let mut msgs = until(&mut ws, is_ack(1)).await;
    msgs.extend(until(&mut ws, |m| telemetry(std::slice::from_ref(m)).len() == 1 && matches!(&m.body, ServerBody::Telemetry { record } if record.pulse_index >= 12)).await);
    send(&mut ws, &id, 2, ControlCommand::new(CommandKind::LaserOff)).await;
    msgs.extend(until(&mut ws, is_ack(2)).await);

    // Laser off: the stream goes quiet and the snapshot stops moving.
    let snap: Value = svc
        .http
        .get(format!("http://{}/sessions/{id}", svc.addr))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(snap["laser_on"], false);
    let frozen = snap["records"].as_u64().unwrap();
    let quiet = tokio::time::timeout(Duration::from_millis(300), ws.next()).await;
    assert!(quiet.is_err(), "unexpected message while the laser is off");

    send(&mut ws, &id, 3, ControlCommand::new(CommandKind::EndSession)).await;
    msgs.extend(until(&mut ws, is_ack(3)).await);

    for pair in msgs.windows(2) {
        assert_eq!(pair[1].seq, pair[0].seq + 1);
    }
    assert!(msgs.iter().all(|m| m.session_id == id));
    let live = telemetry(&msgs);
    assert_eq!(live.len() as u64, frozen);
    for (i, r) in live.iter().enumerate() {
        assert_eq!(r.pulse_index, i as u64);
    }

    let file = read_session(std::fs::read(svc.record_path(&id)).unwrap().as_slice()).unwrap();
    assert_eq!(file.header.session_id, id);
    assert_eq!(file.header.seed, 7);
    assert_eq!(file.records, live);
}

#[tokio::test]
async fn subscribers_see_the_same_stream_and_can_resume() {
    let svc = start().await;
    let id = svc.session("pigskin_tattoo_water", 3).await;
    let mut a = svc.connect(&id, 0).await;
    let mut b = svc.connect(&id, 0).await;
    next(&mut a).await;
    send(&mut a, &id, 1, ControlCommand::new(CommandKind::LaserOn)).await;
    let first_pulses = |m: &ServerMessage| matches!(&m.body, ServerBody::Telemetry { record } if record.pulse_index == 9);
    let seen_a = telemetry(&until(&mut a, first_pulses).await);
    let seen_b = telemetry(&until(&mut b, first_pulses).await);
    assert_eq!(seen_a, seen_b);
    assert_eq!(seen_a.len(), 10);

    // Drop b and resume from the last sequence number it processed.
    let last: u64 = until(&mut b, |m| matches!(&m.body, ServerBody::Telemetry { record } if record.pulse_index == 12))
        .await
        .last()
        .unwrap()
        .seq;
    drop(b);
    let mut c = svc.connect(&id, last).await;
    let resumed = until(&mut c, |m| matches!(&m.body, ServerBody::Telemetry { record } if record.pulse_index == 15)).await;
    assert_eq!(resumed[0].seq, last + 1);
    let pulses: Vec<u64> = telemetry(&resumed).iter().map(|r| r.pulse_index).collect();
    assert_eq!(pulses, vec![13, 14, 15]);
    send(&mut a, &id, 2, ControlCommand::new(CommandKind::EndSession)).await;
}

#[tokio::test]
async fn rejected_commands_carry_codes() {
    let svc = start().await;
    let id = svc.session("phantom_tattoo", 1).await;
    let mut ws = svc.connect(&id, 0).await;
    next(&mut ws).await;

    send(&mut ws, &id, 1, ControlCommand::new(CommandKind::LaserOff)).await;
    let m = until(&mut ws, |m| error_code(m).is_some()).await.pop().unwrap();
    assert_eq!(error_code(&m), Some("not_running"));

    send(&mut ws, &id, 2, ControlCommand::new(CommandKind::LaserOn)).await;
    until(&mut ws, is_ack(2)).await;
    send(&mut ws, &id, 3, ControlCommand::set_scenario("pigskin_untattooed")).await;
    let m = until(&mut ws, |m| error_code(m).is_some()).await.pop().unwrap();
    assert_eq!(error_code(&m), Some("scenario_locked"));
    assert!(matches!(m.body, ServerBody::Error { command_seq: Some(3), .. }));

    send(&mut ws, &id, 3, ControlCommand::new(CommandKind::LaserOff)).await;
    let m = until(&mut ws, |m| error_code(m).is_some()).await.pop().unwrap();
    assert_eq!(error_code(&m), Some("bad_sequence"));

    send(&mut ws, "someone-else", 4, ControlCommand::new(CommandKind::LaserOff)).await;
    let m = until(&mut ws, |m| error_code(m).is_some()).await.pop().unwrap();
    assert_eq!(error_code(&m), Some("wrong_session"));

    ws.send(Message::text("{\"seq\":5,\"oops\":true}")).await.unwrap();
    let m = until(&mut ws, |m| error_code(m).is_some()).await.pop().unwrap();
    assert_eq!(error_code(&m), Some("bad_message"));
    assert!(matches!(m.body, ServerBody::Error { command_seq: Some(5), .. }));

    send(&mut ws, &id, 6, ControlCommand::new(CommandKind::EndSession)).await;
    until(&mut ws, is_ack(6)).await;
    send(&mut ws, &id, 7, ControlCommand::set_scenario("pigskin_untattooed")).await;
    let m = until(&mut ws, |m| !matches!(m.body, ServerBody::Telemetry { .. })).await.pop().unwrap();
    assert!(matches!(m.body, ServerBody::Ack { command_seq: 7, .. }), "{m:?}");
}

#[tokio::test]
async fn same_seed_gives_same_records_across_services() {
    let mut streams = Vec::new();
    for _ in 0..2 {
        let svc = start().await;
        let id = svc.session("pigskin_tattoo_water", 11).await;
        let mut ws = svc.connect(&id, 0).await;
        send(&mut ws, &id, 1, ControlCommand::new(CommandKind::LaserOn)).await;
        let msgs = until(&mut ws, |m| matches!(&m.body, ServerBody::Telemetry { record } if record.pulse_index == 19)).await;
        let mut recs = telemetry(&msgs);
        for r in &mut recs {
            // Pacing follows the wall clock; everything else is seeded.
            r.session_time = 0.0;
        }
        streams.push(recs);
    }
    assert_eq!(streams[0].len(), 20);
    assert_eq!(streams[0], streams[1]);
}
