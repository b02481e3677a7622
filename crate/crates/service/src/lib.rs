//! HTTP wrappers around the detector and the tracker, with blocking clients.
//!
//! Servers run on a tokio runtime owned by a background thread so they can
//! be started from synchronous code and torn down with [`ServerHandle`].

mod client;
mod error;
mod handle;
pub mod mots;
pub mod ods;

pub use client::{MotsClient, OdsClient};
pub use error::{ErrorBody, ServiceError};
pub use handle::ServerHandle;
pub use mots::{mots_router, spawn_mots, CreateSessionResponse};
pub use ods::{ods_router, spawn_ods, DetectRequest, DetectResponse};
