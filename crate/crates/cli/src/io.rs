//! File formats shared by the subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use drivescope_core::characterization::FollowSample;
use drivescope_core::detection::{Detection, ObjectClass};
use drivescope_core::geometry::OrientedBox;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const FRAME_INDEX_HEADER: &str = "frame_id,timestamp_us,file";
pub const TRUTH_HEADER: &str = "frame_id,timestamp_us,id,cls,cx,cy,w,l,yaw,vx,vy";
pub const FOLLOW_HEADER: &str = "timestamp_us,v,s,dv,a_obs";

fn data_lines(text: &str, header: &str) -> Result<Vec<(usize, Vec<String>)>, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(format!("expected header `{header}`")),
    }
    let n = header.split(',').count();
    lines
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(|f| f.trim().to_string()).collect();
            if fields.len() != n {
                Err(format!("line {}: expected {n} fields, got {}", i + 1, fields.len()))
            } else {
                Ok((i + 1, fields))
            }
        })
        .collect()
}

fn num<T: std::str::FromStr>(line: usize, field: &str, raw: &str) -> Result<T, String> {
    raw.parse()
        .map_err(|_| format!("line {line}: bad {field} `{raw}`"))
}

/// One entry of a frame index; `file` is relative to the index location.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub frame_id: String,
    pub timestamp_us: i64,
    pub path: PathBuf,
}

pub fn read_frame_index(path: &Path) -> Result<Vec<FrameRef>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::new();
    for (line, f) in data_lines(&text, FRAME_INDEX_HEADER)? {
        frames.push(FrameRef {
            frame_id: f[0].clone(),
            timestamp_us: num(line, "timestamp_us", &f[1])?,
            path: base.join(&f[2]),
        });
    }
    Ok(frames)
}

pub fn frame_index_csv(entries: &[(String, i64, String)]) -> String {
    let mut s = format!("{FRAME_INDEX_HEADER}\n");
    for (id, t, file) in entries {
        s.push_str(&format!("{id},{t},{file}\n"));
    }
    s
}

/// Ground-truth box of one vehicle in one frame, ego frame, velocity
/// relative to the ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub frame_id: String,
    pub timestamp_us: i64,
    pub id: u64,
    pub detection: Detection,
    pub vx: f64,
    pub vy: f64,
}

pub fn truth_csv(rows: &[TruthRow]) -> String {
    let mut s = format!("{TRUTH_HEADER}\n");
    for r in rows {
        let b = r.detection.bbox;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.frame_id, r.timestamp_us, r.id, r.detection.cls, b.cx, b.cy, b.w, b.l, b.yaw, r.vx, r.vy
        ));
    }
    s
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthRow>, String> {
    let mut rows = Vec::new();
    for (line, f) in data_lines(text, TRUTH_HEADER)? {
        let cls: ObjectClass = f[3].parse().map_err(|e| format!("line {line}: {e}"))?;
        let v: Vec<f64> = f[4..]
            .iter()
            .map(|x| num(line, "number", x))
            .collect::<Result<_, _>>()?;
        rows.push(TruthRow {
            frame_id: f[0].clone(),
            timestamp_us: num(line, "timestamp_us", &f[1])?,
            id: num(line, "id", &f[2])?,
            detection: Detection::new(cls, OrientedBox::new(v[0], v[1], v[2], v[3], v[4]), 1.0),
            vx: v[5],
            vy: v[6],
        });
    }
    Ok(rows)
}

pub fn truth_by_frame(rows: &[TruthRow]) -> BTreeMap<String, Vec<Detection>> {
    let mut map: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for r in rows {
        map.entry(r.frame_id.clone()).or_default().push(r.detection);
    }
    map
}

pub fn follow_csv(samples: &[FollowSample]) -> String {
    let mut s = format!("{FOLLOW_HEADER}\n");
    for x in samples {
        s.push_str(&format!("{},{},{},{},{}\n", x.timestamp_us, x.v, x.s, x.dv, x.a_obs));
    }
    s
}

pub fn parse_follow(text: &str) -> Result<Vec<FollowSample>, String> {
    data_lines(text, FOLLOW_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            Ok(FollowSample {
                timestamp_us: num(line, "timestamp_us", &f[0])?,
                v: num(line, "v", &f[1])?,
                s: num(line, "s", &f[2])?,
                dv: num(line, "dv", &f[3])?,
                a_obs: num(line, "a_obs", &f[4])?,
            })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable"));
        s.push('\n');
    }
    s
}

pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn read_string(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}
