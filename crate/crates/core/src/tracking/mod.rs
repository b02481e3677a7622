//! Multi-object tracking over detection frames.

mod assign;
mod kalman;
mod tracker;

pub use assign::{associate, associate_matrix, iou_matrix, Association};
pub use kalman::{process_noise, transition, KalmanState};
pub use tracker::{
    Frame, Track, TrackError, TrackStatus, TrackedBox, TrackedFrame, Tracker, TrackerConfig,
};

pub use crate::geometry::iou_oriented;
