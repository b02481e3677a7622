//! Lidar perception and driver characterization toolkit.
//!
//! Point clouds go in one end ([`pointcloud`]), become top-view raster maps
//! ([`bevmap`]), pass through a pluggable detector ([`detection`]) and a
//! Kalman/IoU tracker ([`tracking`]), and come out as per-lane leader and
//! follower observables ([`scene`]). Those observables feed the car-following
//! parameter estimator and correlation analysis in [`characterization`].
//!
//! Coordinates are ego-centric everywhere: x forward, y left, z up, yaw
//! counter-clockwise from +x.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bevmap;
pub mod characterization;
pub mod detection;
pub mod geometry;
pub mod pointcloud;
pub mod scene;
pub mod tracking;

pub use bevmap::{BevMap, GridConfig, MapHalf};
pub use characterization::{IdmParams, ParamBounds};
pub use detection::{Detection, Detector, ObjectClass};
pub use geometry::OrientedBox;
pub use pointcloud::{Point, PointCloud};
pub use tracking::{Frame, TrackedBox, Tracker, TrackerConfig};
