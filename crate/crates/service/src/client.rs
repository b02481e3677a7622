use std::time::Duration;

use drivescope_core::bevmap::BevMap;
use drivescope_core::detection::{DetectError, DetectErrorKind, Detection, Detector};
use drivescope_core::tracking::{Frame, TrackedFrame, TrackerConfig};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use crate::mots::CreateSessionResponse;
use crate::ods::{DetectRequest, DetectResponse};
use crate::{ErrorBody, ServiceError};

fn build(timeout: Duration) -> Result<Client, ServiceError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ServiceError::Transport(e.to_string()))
}

fn send(req: RequestBuilder) -> Result<reqwest::blocking::Response, ServiceError> {
    let resp = req.send().map_err(|e| {
        if e.is_timeout() {
            ServiceError::Timeout
        } else {
            ServiceError::Transport(e.to_string())
        }
    })?;
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().unwrap_or_default();
    let msg = serde_json::from_str::<ErrorBody>(&text)
        .map(|b| b.error)
        .unwrap_or(text);
    Err(match status {
        StatusCode::NOT_FOUND => ServiceError::NotFound(msg),
        StatusCode::CONFLICT => ServiceError::Conflict(msg),
        s if s.is_client_error() => ServiceError::BadRequest(msg),
        _ => ServiceError::Server(msg),
    })
}

fn decode<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, ServiceError> {
    let bytes = resp.bytes().map_err(|e| {
        if e.is_timeout() {
            ServiceError::Timeout
        } else {
            ServiceError::Transport(e.to_string())
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::Protocol(e.to_string()))
}

/// Blocking client for the detection service. Also usable directly as a
/// [`Detector`].
#[derive(Debug, Clone)]
pub struct OdsClient {
    base: String,
    http: Client,
}

impl OdsClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ServiceError> {
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            http: build(timeout)?,
        })
    }

    pub fn request_detections(&self, map: &BevMap) -> Result<Vec<Detection>, ServiceError> {
        let body = DetectRequest::from_map(map).map_err(ServiceError::BadRequest)?;
        self.post_raw(&serde_json::to_vec(&body).expect("request serializes"))
            .map(|r| r.detections)
    }

    /// Posts an arbitrary JSON body; used to exercise malformed payloads.
    pub fn post_raw(&self, body: &[u8]) -> Result<DetectResponse, ServiceError> {
        let req = self
            .http
            .post(format!("{}/v1/detections", self.base))
            .header("content-type", "application/json")
            .body(body.to_vec());
        decode(send(req)?)
    }
}

impl Detector for OdsClient {
    fn detect(&self, map: &BevMap) -> Result<Vec<Detection>, DetectError> {
        self.request_detections(map).map_err(|e| {
            let kind = match &e {
                ServiceError::Timeout => DetectErrorKind::Timeout,
                ServiceError::BadRequest(_) | ServiceError::NotFound(_) | ServiceError::Conflict(_) => {
                    DetectErrorKind::BadRequest
                }
                ServiceError::Server(_) => DetectErrorKind::DetectorFailure,
                ServiceError::Protocol(_) => DetectErrorKind::Protocol,
                ServiceError::Transport(_) | ServiceError::Startup(_) => DetectErrorKind::Transport,
            };
            DetectError::new(&map.frame_id, kind, e.to_string())
        })
    }
}

/// Blocking client for the tracking service.
#[derive(Debug, Clone)]
pub struct MotsClient {
    base: String,
    http: Client,
}

impl MotsClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, ServiceError> {
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            http: build(timeout)?,
        })
    }

    pub fn create_session(&self, config: &TrackerConfig) -> Result<u64, ServiceError> {
        let req = self.http.post(format!("{}/v1/sessions", self.base)).json(config);
        decode::<CreateSessionResponse>(send(req)?).map(|r| r.session_id)
    }

    pub fn post_frame(&self, session_id: u64, frame: &Frame) -> Result<TrackedFrame, ServiceError> {
        let req = self
            .http
            .post(format!("{}/v1/sessions/{session_id}/frames", self.base))
            .json(frame);
        decode(send(req)?)
    }

    pub fn close_session(&self, session_id: u64) -> Result<(), ServiceError> {
        let req = self.http.delete(format!("{}/v1/sessions/{session_id}", self.base));
        send(req).map(|_| ())
    }
}
