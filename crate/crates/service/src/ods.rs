//! Object detection service: `POST /v1/detections`.
//!
//! Request body: `{"metadata": MapMeta, "png": "<base64 RGB PNG>"}`.
//! Response body: `{"frame_id": ..., "detections": [{cls, cx, cy, w, l, yaw, score}]}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use drivescope_core::bevmap::{BevMap, MapMeta};
use drivescope_core::detection::{detect, DetectErrorKind, Detection, Detector};
use serde::{Deserialize, Serialize};

use crate::error::reply;
use crate::{ServerHandle, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub metadata: MapMeta,
    pub png: String,
}

impl DetectRequest {
    pub fn from_map(map: &BevMap) -> Result<Self, String> {
        let png = map.encode_png().map_err(|e| e.to_string())?;
        Ok(Self {
            metadata: map.meta(),
            png: STANDARD.encode(png),
        })
    }

    pub fn to_map(&self) -> Result<BevMap, String> {
        let bytes = STANDARD
            .decode(&self.png)
            .map_err(|e| format!("png field is not base64: {e}"))?;
        BevMap::decode_png(&bytes, &self.metadata).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub frame_id: String,
    pub detections: Vec<Detection>,
}

type Shared = Arc<dyn Detector>;

async fn handle(State(detector): State<Shared>, body: Bytes) -> Response {
    let req: DetectRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return reply(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let map = match req.to_map() {
        Ok(m) => m,
        Err(e) => return reply(StatusCode::BAD_REQUEST, e),
    };
    let result = tokio::task::spawn_blocking(move || {
        let out = detect(&map, &detector);
        (map.frame_id, out)
    })
    .await;
    match result {
        Ok((frame_id, Ok(detections))) => Json(DetectResponse { frame_id, detections }).into_response(),
        Ok((_, Err(e))) if e.kind == DetectErrorKind::BadRequest => reply(StatusCode::BAD_REQUEST, e.to_string()),
        Ok((_, Err(e))) => reply(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => reply(StatusCode::INTERNAL_SERVER_ERROR, format!("detector panicked: {e}")),
    }
}

pub fn ods_router(detector: Arc<dyn Detector>) -> Router {
    Router::new()
        .route("/v1/detections", post(handle))
        .with_state(detector)
}

/// Starts the detection service on `bind` (use port 0 for an ephemeral port).
pub fn spawn_ods(detector: Arc<dyn Detector>, bind: &str) -> Result<ServerHandle, ServiceError> {
    ServerHandle::spawn(ods_router(detector), bind)
}
