//! Multi-object tracking service.
//!
//! * `POST /v1/sessions` with a `TrackerConfig` body returns `{session_id}`.
//! * `POST /v1/sessions/{id}/frames` with a `Frame` body returns the tracked frame.
//! * `DELETE /v1/sessions/{id}` closes a session.
//!
//! Frames for one session are applied one at a time under that session's
//! lock; a concurrent post waits its turn. Sessions never share state.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, post};
use axum::{Json, Router};
use drivescope_core::tracking::{Frame, TrackError, Tracker, TrackerConfig};
use serde::{Deserialize, Serialize};

use crate::error::reply;
use crate::{ServerHandle, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: u64,
}

#[derive(Default)]
struct Sessions {
    next_id: AtomicU64,
    live: Mutex<HashMap<u64, Arc<tokio::sync::Mutex<Tracker>>>>,
}

type Shared = Arc<Sessions>;

async fn create(State(s): State<Shared>, body: Bytes) -> Response {
    let cfg: TrackerConfig = if body.iter().all(u8::is_ascii_whitespace) {
        TrackerConfig::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(c) => c,
            Err(e) => return reply(StatusCode::BAD_REQUEST, format!("malformed config: {e}")),
        }
    };
    let tracker = match Tracker::new(cfg) {
        Ok(t) => t,
        Err(e) => return reply(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let session_id = s.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    s.live
        .lock()
        .expect("session table poisoned")
        .insert(session_id, Arc::new(tokio::sync::Mutex::new(tracker)));
    (StatusCode::CREATED, Json(CreateSessionResponse { session_id })).into_response()
}

async fn post_frame(State(s): State<Shared>, Path(id): Path<u64>, body: Bytes) -> Response {
    let Some(session) = s.live.lock().expect("session table poisoned").get(&id).cloned() else {
        return reply(StatusCode::NOT_FOUND, format!("no session {id}"));
    };
    let frame: Frame = match serde_json::from_slice(&body) {
        Ok(f) => f,
        Err(e) => return reply(StatusCode::BAD_REQUEST, format!("malformed frame: {e}")),
    };
    let mut tracker = session.lock().await;
    // closed while waiting for the lock
    if !s.live.lock().expect("session table poisoned").contains_key(&id) {
        return reply(StatusCode::NOT_FOUND, format!("no session {id}"));
    }
    match tracker.update(&frame) {
        Ok(out) => Json(out).into_response(),
        Err(e @ TrackError::Ordering { .. }) => reply(StatusCode::CONFLICT, e.to_string()),
        Err(e) => reply(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn close(State(s): State<Shared>, Path(id): Path<u64>) -> Response {
    match s.live.lock().expect("session table poisoned").remove(&id) {
        Some(_) => StatusCode::NO_CONTENT.into_response(),
        None => reply(StatusCode::NOT_FOUND, format!("no session {id}")),
    }
}

pub fn mots_router() -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}/frames", post(post_frame))
        .route("/v1/sessions/{id}", delete(close))
        .with_state(Arc::new(Sessions::default()))
}

pub fn spawn_mots(bind: &str) -> Result<ServerHandle, ServiceError> {
    ServerHandle::spawn(mots_router(), bind)
}
