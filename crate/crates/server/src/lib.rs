//! Live session service. Each session is owned by one task that runs the
//! simulation clock; websocket clients send control commands into its queue
//! and receive a copy of every event it emits.
//!
//! HTTP surface:
//!
//! - `GET /scenarios` lists scenario names.
//! - `POST /sessions` with `{"scenario": name, "seed": n}` creates a session.
//! - `GET /sessions` lists sessions, `GET /sessions/{id}` returns a snapshot.
//! - `GET /sessions/{id}/ws?after=N` opens the message stream, starting with
//!   every logged event whose sequence number is above `N`.
//!
//! Every websocket text frame is one JSON line. Server sequence numbers are
//! per session and shared by all subscribers, so a client that reconnects
//! with the last number it saw resumes without gaps or duplicates.

mod hub;
mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use pamon_core::scenario::ScenarioRegistry;

pub use hub::{Hub, SessionHandle, Snapshot};
pub use routes::router;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub registry: ScenarioRegistry,
    /// Session files are written here when a session ends.
    pub record_dir: Option<PathBuf>,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    pub tick_interval: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            registry: ScenarioRegistry::builtin(),
            record_dir: None,
            time_scale: 1.0,
            tick_interval: Duration::from_millis(20),
        }
    }
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve(
    cfg: ServerConfig,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let hub = Hub::new(cfg);
    axum::serve(listener, router(hub))
        .with_graceful_shutdown(shutdown)
        .await
}
