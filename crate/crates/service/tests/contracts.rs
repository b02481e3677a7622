use std::sync::Arc;
use std::thread;
use std::time::Duration;

use drivescope_core::bevmap::{make_frgb, BevMap, GridConfig};
use drivescope_core::detection::{
    DetectError, DetectErrorKind, Detection, Detector, ObjectClass, OracleConfig, OracleDetector,
};
use drivescope_core::geometry::OrientedBox;
use drivescope_core::pointcloud::{Point, PointCloud};
use drivescope_core::tracking::{Frame, TrackStatus, TrackerConfig};
use drivescope_service::{spawn_mots, spawn_ods, MotsClient, OdsClient, ServiceError};

const TIMEOUT: Duration = Duration::from_secs(10);

fn small_grid() -> GridConfig {
    GridConfig {
        extent_m: 20.0,
        cells_per_side: 100,
        ..GridConfig::default()
    }
}

fn map_with_points(frame_id: &str, xy: &[(f64, f64)]) -> BevMap {
    let pts = xy.iter().map(|&(x, y)| Point::new(x, y, -0.5, 40.0, 0)).collect();
    let cloud = PointCloud::new(pts, 1_000_000, frame_id).unwrap();
    make_frgb(&cloud, &small_grid()).unwrap()
}

fn three_dets() -> Vec<Detection> {
    vec![
        Detection::new(ObjectClass::Car, OrientedBox::new(5.123456789, -2.000000123, 1.8, 4.5, 0.3141592653), 0.91),
        Detection::new(ObjectClass::Van, OrientedBox::new(-7.5, 3.25, 2.0, 5.1, -1.2), 0.55),
        Detection::new(ObjectClass::Truck, OrientedBox::new(12.0, 0.1, 2.5, 9.0, 3.0), 0.123456789),
    ]
}

struct Fixed(Vec<Detection>);

impl Detector for Fixed {
    fn detect(&self, _: &BevMap) -> Result<Vec<Detection>, DetectError> {
        Ok(self.0.clone())
    }
}

struct Broken;

impl Detector for Broken {
    fn detect(&self, map: &BevMap) -> Result<Vec<Detection>, DetectError> {
        Err(DetectError::new(&map.frame_id, DetectErrorKind::DetectorFailure, "model crashed"))
    }
}

struct Slow;

impl Detector for Slow {
    fn detect(&self, _: &BevMap) -> Result<Vec<Detection>, DetectError> {
        thread::sleep(Duration::from_millis(800));
        Ok(Vec::new())
    }
}

#[test]
fn detection_round_trip_preserves_values() {
    let server = spawn_ods(Arc::new(Fixed(three_dets())), "127.0.0.1:0").unwrap();
    let client = OdsClient::new(&server.url(), TIMEOUT).unwrap();
    let got = client.request_detections(&map_with_points("f1", &[(1.0, 1.0)])).unwrap();
    let want = three_dets();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.cls, w.cls);
        for (a, b) in [
            (g.bbox.cx, w.bbox.cx),
            (g.bbox.cy, w.bbox.cy),
            (g.bbox.w, w.bbox.w),
            (g.bbox.l, w.bbox.l),
            (g.bbox.yaw, w.bbox.yaw),
            (g.score, w.score),
        ] {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn response_carries_frame_id() {
    let server = spawn_ods(Arc::new(Fixed(Vec::new())), "127.0.0.1:0").unwrap();
    let client = OdsClient::new(&server.url(), TIMEOUT).unwrap();
    let map = map_with_points("frame-0042", &[(1.0, 1.0)]);
    let body = serde_json::to_vec(&drivescope_service::DetectRequest::from_map(&map).unwrap()).unwrap();
    assert_eq!(client.post_raw(&body).unwrap().frame_id, "frame-0042");
}

#[test]
fn missing_metadata_is_a_client_error() {
    let server = spawn_ods(Arc::new(Fixed(three_dets())), "127.0.0.1:0").unwrap();
    let client = OdsClient::new(&server.url(), TIMEOUT).unwrap();
    let map = map_with_points("f1", &[(1.0, 1.0)]);
    let mut body = serde_json::to_value(drivescope_service::DetectRequest::from_map(&map).unwrap()).unwrap();
    body.as_object_mut().unwrap().remove("metadata");
    let err = client.post_raw(&serde_json::to_vec(&body).unwrap()).unwrap_err();
    assert!(matches!(err, ServiceError::BadRequest(_)), "{err:?}");

    let err = client.post_raw(b"{not json").unwrap_err();
    assert!(matches!(err, ServiceError::BadRequest(_)), "{err:?}");

    // metadata that disagrees with the image
    let mut body = serde_json::to_value(drivescope_service::DetectRequest::from_map(&map).unwrap()).unwrap();
    body["metadata"]["cells_per_side"] = serde_json::json!(64);
    let err = client.post_raw(&serde_json::to_vec(&body).unwrap()).unwrap_err();
    assert!(matches!(err, ServiceError::BadRequest(_)), "{err:?}");
}

#[test]
fn detector_failure_is_a_server_error() {
    let server = spawn_ods(Arc::new(Broken), "127.0.0.1:0").unwrap();
    let client = OdsClient::new(&server.url(), TIMEOUT).unwrap();
    let map = map_with_points("f9", &[(1.0, 1.0)]);
    assert!(matches!(client.request_detections(&map), Err(ServiceError::Server(_))));
    let err = client.detect(&map).unwrap_err();
    assert_eq!(err.kind, DetectErrorKind::DetectorFailure);
    assert_eq!(err.frame_id, "f9");
}

#[test]
fn slow_detector_times_out() {
    let server = spawn_ods(Arc::new(Slow), "127.0.0.1:0").unwrap();
    let client = OdsClient::new(&server.url(), Duration::from_millis(150)).unwrap();
    let map = map_with_points("f1", &[(1.0, 1.0)]);
    assert_eq!(client.request_detections(&map), Err(ServiceError::Timeout));
    assert_eq!(client.detect(&map).unwrap_err().kind, DetectErrorKind::Timeout);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let client = OdsClient::new(&format!("http://{addr}"), Duration::from_secs(2)).unwrap();
    let err = client.detect(&map_with_points("f1", &[(1.0, 1.0)])).unwrap_err();
    assert_eq!(err.kind, DetectErrorKind::Transport);
}

#[test]
fn concurrent_identical_requests_get_identical_responses() {
    let truth = vec![
        Detection::new(ObjectClass::Car, OrientedBox::new(6.0, 2.0, 1.8, 4.5, 0.2), 1.0),
        Detection::new(ObjectClass::Car, OrientedBox::new(-4.0, -3.0, 1.8, 4.5, 1.0), 1.0),
    ];
    let cfg = OracleConfig {
        pos_sigma_m: 0.2,
        yaw_sigma_rad: 0.05,
        fp_rate: 0.5,
        fp_slots: 3,
        seed: 7,
        ..OracleConfig::default()
    };
    let server = spawn_ods(Arc::new(OracleDetector::fixed(truth, cfg)), "127.0.0.1:0").unwrap();
    let client = OdsClient::new(&server.url(), TIMEOUT).unwrap();
    let map = map_with_points("same", &[(6.0, 2.0), (-4.0, -3.0)]);
    let results: Vec<Vec<Detection>> = thread::scope(|s| {
        let hs: Vec<_> = (0..8)
            .map(|_| s.spawn(|| client.request_detections(&map).unwrap()))
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(!results[0].is_empty());
    assert!(results.iter().all(|r| r == &results[0]));
}

fn car(cx: f64, cy: f64) -> Detection {
    Detection::new(ObjectClass::Car, OrientedBox::new(cx, cy, 1.8, 4.5, 0.0), 0.9)
}

fn frame(k: i64, dets: Vec<Detection>) -> Frame {
    Frame {
        frame_id: format!("f{k}"),
        timestamp_us: 1_000_000 + k * 100_000,
        detections: dets,
    }
}

#[test]
fn ids_persist_for_a_moving_object() {
    let server = spawn_mots("127.0.0.1:0").unwrap();
    let client = MotsClient::new(&server.url(), TIMEOUT).unwrap();
    let cfg = TrackerConfig {
        confirm_hits: 1,
        ..TrackerConfig::default()
    };
    let sid = client.create_session(&cfg).unwrap();
    let mut ids = Vec::new();
    for k in 0..3 {
        let out = client.post_frame(sid, &frame(k, vec![car(10.0 + 0.5 * k as f64, 2.0)])).unwrap();
        assert_eq!(out.frame_id, format!("f{k}"));
        assert_eq!(out.tracks.len(), 1);
        assert_eq!(out.tracks[0].status, TrackStatus::Confirmed);
        ids.push(out.tracks[0].id);
    }
    assert!(ids.iter().all(|i| *i == ids[0]));
    client.close_session(sid).unwrap();
}

#[test]
fn tracked_fields_survive_the_wire() {
    let server = spawn_mots("127.0.0.1:0").unwrap();
    let client = MotsClient::new(&server.url(), TIMEOUT).unwrap();
    let cfg = TrackerConfig {
        confirm_hits: 1,
        ..TrackerConfig::default()
    };
    let sid = client.create_session(&cfg).unwrap();
    let mut local = drivescope_core::tracking::Tracker::new(cfg).unwrap();
    for k in 0..5 {
        let f = frame(k, vec![car(10.0 + 0.7312 * k as f64, 2.0 - 0.1234567 * k as f64)]);
        let remote = client.post_frame(sid, &f).unwrap();
        let expect = local.update(&f).unwrap();
        assert_eq!(remote.tracks.len(), expect.tracks.len());
        for (r, e) in remote.tracks.iter().zip(&expect.tracks) {
            assert_eq!((r.id, r.status, r.detection.cls), (e.id, e.status, e.detection.cls));
            for (a, b) in [
                (r.detection.bbox.cx, e.detection.bbox.cx),
                (r.detection.bbox.cy, e.detection.bbox.cy),
                (r.detection.bbox.w, e.detection.bbox.w),
                (r.detection.bbox.l, e.detection.bbox.l),
                (r.detection.bbox.yaw, e.detection.bbox.yaw),
                (r.detection.score, e.detection.score),
                (r.vx, e.vx),
                (r.vy, e.vy),
            ] {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn sessions_are_isolated() {
    let server = spawn_mots("127.0.0.1:0").unwrap();
    let client = MotsClient::new(&server.url(), TIMEOUT).unwrap();
    let cfg = TrackerConfig {
        confirm_hits: 1,
        ..TrackerConfig::default()
    };
    let a = client.create_session(&cfg).unwrap();
    let b = client.create_session(&cfg).unwrap();
    assert_ne!(a, b);
    client
        .post_frame(a, &frame(0, vec![car(5.0, 0.0), car(-10.0, 3.0), car(20.0, -3.0)]))
        .unwrap();
    let out_b = client.post_frame(b, &frame(0, vec![car(30.0, 8.0)])).unwrap();
    assert_eq!(out_b.tracks.len(), 1);
    assert_eq!(out_b.tracks[0].id, 1);
    assert!((out_b.tracks[0].detection.bbox.cx - 30.0).abs() < 1e-9);
    // b is at t=0 while a moves on; timestamps are per session
    let out_a = client.post_frame(a, &frame(5, vec![])).unwrap();
    assert_eq!(out_a.tracks.len(), 3);
    let out_b = client.post_frame(b, &frame(1, vec![car(30.0, 8.0)])).unwrap();
    assert_eq!(out_b.tracks.len(), 1);
}

#[test]
fn session_errors_have_distinct_classes() {
    let server = spawn_mots("127.0.0.1:0").unwrap();
    let client = MotsClient::new(&server.url(), TIMEOUT).unwrap();
    let sid = client.create_session(&TrackerConfig::default()).unwrap();
    client.post_frame(sid, &frame(3, vec![])).unwrap();
    assert!(matches!(client.post_frame(sid, &frame(3, vec![])), Err(ServiceError::Conflict(_))));
    assert!(matches!(client.post_frame(sid, &frame(2, vec![])), Err(ServiceError::Conflict(_))));
    client.close_session(sid).unwrap();
    assert!(matches!(client.post_frame(sid, &frame(4, vec![])), Err(ServiceError::NotFound(_))));
    assert!(matches!(client.close_session(sid), Err(ServiceError::NotFound(_))));
    assert!(matches!(client.post_frame(999, &frame(0, vec![])), Err(ServiceError::NotFound(_))));
    let bad = TrackerConfig {
        gate_iou: 1.5,
        ..TrackerConfig::default()
    };
    assert!(matches!(client.create_session(&bad), Err(ServiceError::BadRequest(_))));
    let bad_det = Detection::new(ObjectClass::Car, OrientedBox::new(0.0, 0.0, -1.0, 4.0, 0.0), 0.5);
    let sid = client.create_session(&TrackerConfig::default()).unwrap();
    assert!(matches!(client.post_frame(sid, &frame(0, vec![bad_det])), Err(ServiceError::BadRequest(_))));
}

#[test]
fn concurrent_posts_to_one_session_never_interleave() {
    let server = spawn_mots("127.0.0.1:0").unwrap();
    let client = MotsClient::new(&server.url(), TIMEOUT).unwrap();
    let sid = client.create_session(&TrackerConfig::default()).unwrap();
    // every post carries the same timestamp: exactly one may be applied
    let results: Vec<_> = thread::scope(|s| {
        let hs: Vec<_> = (0..8)
            .map(|_| s.spawn(|| client.post_frame(sid, &frame(1, vec![car(1.0, 1.0)]))))
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, ServiceError::Conflict(_))));
    let next = client.post_frame(sid, &frame(2, vec![car(1.0, 1.0)])).unwrap();
    assert_eq!(next.tracks.len(), 0);
}
