use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use pamon_core::monitor::{Alarm, StageEstimate};
use pamon_core::session::{
    ClientMessage, CommandKind, ServerBody, ServerMessage, Session, SessionFactory, SessionFile,
    SessionState,
};
use pamon_core::{Error, Result};
use serde::Serialize;
use tokio::sync::{broadcast, mpsc, oneshot, watch};

use crate::ServerConfig;

const QUEUE: usize = 256;
const FANOUT: usize = 4096;

/// What readers see without going through the session task.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub session_id: String,
    pub scenario: String,
    pub seed: u64,
    pub state: SessionState,
    pub laser_on: bool,
    pub records: usize,
    pub irradiation_time: f64,
    pub last_seq: u64,
    pub estimate: StageEstimate,
    pub alarm: Alarm,
}

pub(crate) type Backlog = (Vec<Arc<ServerMessage>>, broadcast::Receiver<Arc<ServerMessage>>);

pub(crate) enum Request {
    /// A decoded client message, or the reason it could not be used.
    Client(std::result::Result<ClientMessage, (Option<u64>, Error)>),
    Subscribe {
        after: u64,
        reply: oneshot::Sender<Backlog>,
    },
}

#[derive(Clone)]
pub struct SessionHandle {
    pub id: String,
    pub(crate) queue: mpsc::Sender<Request>,
    snapshot: watch::Receiver<Snapshot>,
}

impl SessionHandle {
    pub fn snapshot(&self) -> Snapshot {
        self.snapshot.borrow().clone()
    }

    pub(crate) async fn subscribe(&self, after: u64) -> Option<Backlog> {
        let (reply, rx) = oneshot::channel();
        self.queue.send(Request::Subscribe { after, reply }).await.ok()?;
        rx.await.ok()
    }
}

/// Registry of live sessions.
#[derive(Clone)]
pub struct Hub {
    cfg: Arc<ServerConfig>,
    factory: Arc<Mutex<SessionFactory>>,
    sessions: Arc<Mutex<BTreeMap<String, SessionHandle>>>,
}

impl Hub {
    pub fn new(cfg: ServerConfig) -> Self {
        Self {
            factory: Arc::new(Mutex::new(SessionFactory::new(cfg.registry.clone()))),
            cfg: Arc::new(cfg),
            sessions: Arc::default(),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    /// Must be called inside a tokio runtime.
    pub fn create(&self, scenario: &str, seed: u64) -> Result<SessionHandle> {
        let session = self.factory.lock().unwrap().create_session(scenario, seed)?;
        let (queue, rx) = mpsc::channel(QUEUE);
        let (fanout, _) = broadcast::channel(FANOUT);
        let (snap_tx, snapshot) = watch::channel(snapshot_of(&session, 0));
        let handle = SessionHandle {
            id: session.id().to_string(),
            queue,
            snapshot,
        };
        let task = SessionTask {
            session,
            cfg: self.cfg.clone(),
            log: Vec::new(),
            fanout,
            snapshot: snap_tx,
            last_client_seq: None,
        };
        tokio::spawn(task.run(rx));
        self.sessions
            .lock()
            .unwrap()
            .insert(handle.id.clone(), handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    pub fn list(&self) -> Vec<Snapshot> {
        self.sessions
            .lock()
            .unwrap()
            .values()
            .map(SessionHandle::snapshot)
            .collect()
    }
}

fn snapshot_of(s: &Session, last_seq: u64) -> Snapshot {
    Snapshot {
        session_id: s.id().to_string(),
        scenario: s.scenario().name.clone(),
        seed: s.seed(),
        state: s.state(),
        laser_on: s.laser_on(),
        records: s.records().len(),
        irradiation_time: s.laser_time(),
        last_seq,
        estimate: s.monitor().estimate(),
        alarm: s.monitor().alarm(),
    }
}

struct SessionTask {
    session: Session,
    cfg: Arc<ServerConfig>,
    log: Vec<Arc<ServerMessage>>,
    fanout: broadcast::Sender<Arc<ServerMessage>>,
    snapshot: watch::Sender<Snapshot>,
    last_client_seq: Option<u64>,
}

impl SessionTask {
    async fn run(mut self, mut rx: mpsc::Receiver<Request>) {
        let mut interval = tokio::time::interval(self.cfg.tick_interval);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let mut last = Instant::now();
        loop {
            tokio::select! {
                req = rx.recv() => match req {
                    Some(req) => self.handle(req).await,
                    None => break,
                },
                _ = interval.tick() => {
                    let now = Instant::now();
                    let dt = (now - last).as_secs_f64() * self.cfg.time_scale;
                    last = now;
                    if self.session.state() == SessionState::Running {
                        self.advance(dt);
                    }
                }
            }
        }
    }

    fn advance(&mut self, dt: f64) {
        match self.session.tick(dt) {
            Ok(records) => {
                for record in records {
                    self.emit(ServerBody::Telemetry { record });
                }
            }
            Err(e) => self.emit(ServerBody::from_error(None, &e)),
        }
        self.publish();
    }

    async fn handle(&mut self, req: Request) {
        match req {
            Request::Subscribe { after, reply } => {
                // Logged so the new subscriber's stream ends with current state.
                self.emit(self.state_body());
                let start = self.log.partition_point(|m| m.seq <= after);
                let _ = reply.send((self.log[start..].to_vec(), self.fanout.subscribe()));
            }
            Request::Client(Err((seq, e))) => self.emit(ServerBody::from_error(seq, &e)),
            Request::Client(Ok(msg)) => {
                if let Err(e) = self.check(&msg) {
                    self.emit(ServerBody::from_error(Some(msg.seq), &e));
                } else {
                    self.last_client_seq = Some(msg.seq);
                    self.command(msg).await;
                }
            }
        }
        self.publish();
    }

    fn check(&self, msg: &ClientMessage) -> Result<()> {
        if msg.session_id != self.session.id() {
            return Err(Error::state(
                "wrong_session",
                format!("message for {} sent to {}", msg.session_id, self.session.id()),
            ));
        }
        if self.last_client_seq.is_some_and(|s| msg.seq <= s) {
            return Err(Error::state(
                "bad_sequence",
                format!("sequence {} is not above {}", msg.seq, self.last_client_seq.unwrap()),
            ));
        }
        Ok(())
    }

    async fn command(&mut self, msg: ClientMessage) {
        match self.session.handle_control(&msg.command, &self.cfg.registry) {
            Ok(ack) => {
                // The file is complete before the acknowledgement goes out.
                if msg.command.kind == CommandKind::EndSession {
                    if let Err(e) = self.record().await {
                        self.emit(ServerBody::from_error(Some(msg.seq), &e));
                    }
                }
                self.emit(ServerBody::Ack {
                    command_seq: msg.seq,
                    ack,
                });
            }
            Err(e) => self.emit(ServerBody::from_error(Some(msg.seq), &e)),
        }
    }

    async fn record(&self) -> Result<()> {
        let Some(dir) = &self.cfg.record_dir else {
            return Ok(());
        };
        let file = SessionFile::new(self.session.header(), self.session.records().to_vec())?;
        let path = dir.join(format!("{}.jsonl", self.session.id()));
        write_file(&path, file.to_bytes()?).await?;
        tracing::info!(path = %path.display(), records = file.records.len(), "session recorded");
        Ok(())
    }

    fn state_body(&self) -> ServerBody {
        ServerBody::State {
            state: self.session.state(),
            laser_on: self.session.laser_on(),
            scenario: self.session.scenario().name.clone(),
        }
    }

    fn emit(&mut self, body: ServerBody) {
        let msg = Arc::new(ServerMessage {
            seq: self.log.len() as u64 + 1,
            session_id: self.session.id().to_string(),
            body,
        });
        self.log.push(msg.clone());
        // No subscribers is fine.
        let _ = self.fanout.send(msg);
    }

    fn publish(&self) {
        let snap = snapshot_of(&self.session, self.log.len() as u64);
        self.snapshot.send_replace(snap);
    }
}

async fn write_file(path: &Path, bytes: Vec<u8>) -> Result<()> {
    // Write then rename so readers never see a partial file.
    let tmp = path.with_extension("jsonl.tmp");
    tokio::fs::write(&tmp, bytes).await?;
    tokio::fs::rename(&tmp, path).await?;
    Ok(())
}
