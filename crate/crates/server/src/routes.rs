use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use pamon_core::session::ClientMessage;
use pamon_core::Error;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::hub::{Hub, Request, SessionHandle};

pub fn router(hub: Hub) -> Router {
    Router::new()
        .route("/scenarios", get(scenarios))
        .route("/sessions", get(list).post(create))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/ws", get(stream))
        .with_state(hub)
}

fn error(status: StatusCode, code: &str, message: String) -> Response {
    (status, Json(json!({ "code": code, "message": message }))).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
}

async fn scenarios(State(hub): State<Hub>) -> Json<Vec<String>> {
    Json(hub.config().registry.names().map(String::from).collect())
}

#[derive(Deserialize)]
struct CreateRequest {
    scenario: String,
    #[serde(default)]
    seed: u64,
}

async fn create(State(hub): State<Hub>, Json(req): Json<CreateRequest>) -> Response {
    match hub.create(&req.scenario, req.seed) {
        Ok(h) => (StatusCode::CREATED, Json(h.snapshot())).into_response(),
        Err(e @ Error::NotFound(_)) => error(StatusCode::NOT_FOUND, "not_found", e.to_string()),
        Err(e) => error(StatusCode::BAD_REQUEST, "invalid", e.to_string()),
    }
}

async fn list(State(hub): State<Hub>) -> Response {
    Json(hub.list()).into_response()
}

async fn snapshot(State(hub): State<Hub>, Path(id): Path<String>) -> Response {
    match hub.get(&id) {
        Some(h) => Json(h.snapshot()).into_response(),
        None => not_found(&id),
    }
}

#[derive(Deserialize)]
struct StreamQuery {
    #[serde(default)]
    after: u64,
}

async fn stream(
    State(hub): State<Hub>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    match hub.get(&id) {
        Some(h) => ws.on_upgrade(move |socket| connection(socket, h, q.after)),
        None => not_found(&id),
    }
}

async fn connection(socket: WebSocket, handle: SessionHandle, after: u64) {
    let Some((backlog, mut live)) = handle.subscribe(after).await else {
        return;
    };
    let (mut tx, mut rx) = socket.split();

    let mut next = after;
    let writer = async move {
        for msg in backlog {
            next = msg.seq;
            if tx.send(Message::text(msg.to_line())).await.is_err() {
                return;
            }
        }
        loop {
            match live.recv().await {
                Ok(msg) if msg.seq <= next => continue,
                Ok(msg) => {
                    next = msg.seq;
                    if tx.send(Message::text(msg.to_line())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    // The client resumes from the last sequence it saw.
                    let _ = tx.send(Message::Close(None)).await;
                    return;
                }
                Err(RecvError::Closed) => return,
            }
        }
    };

    let queue = handle.queue.clone();
    let reader = async move {
        while let Some(Ok(frame)) = rx.next().await {
            let text = match frame {
                Message::Text(t) => t,
                Message::Close(_) => break,
                _ => continue,
            };
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let req = ClientMessage::parse_line(line).map_err(|e| (seq_hint(line), e));
                if queue.send(Request::Client(req)).await.is_err() {
                    return;
                }
            }
        }
    };

    tokio::select! {
        _ = writer => {},
        _ = reader => {},
    }
}

/// Best-effort sequence number of an unparseable message, for error replies.
fn seq_hint(line: &str) -> Option<u64> {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()?
        .get("seq")?
        .as_u64()
}
