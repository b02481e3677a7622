//! Gated optimal assignment between predicted tracks and detections.

use crate::geometry::{iou_oriented, OrientedBox};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Association {
    /// (track index, detection index), ordered by track index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Minimum-cost assignment on a rectangular matrix with `rows <= cols`.
/// Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    // 1-based potentials, column 0 is the virtual start
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assigned = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            assigned[owner[j] - 1] = j - 1;
        }
    }
    assigned
}

/// Assignment maximizing total IoU over pairs with IoU at or above `gate`.
///
/// `iou[t][d]` is the overlap of track `t` with detection `d`. Exact ties are
/// broken toward lower track indices, then lower detection indices.
pub fn associate_matrix(iou: &[Vec<f64>], n_dets: usize, gate: f64) -> Association {
    let n_tracks = iou.len();
    if n_tracks == 0 || n_dets == 0 {
        return Association {
            matches: Vec::new(),
            unmatched_tracks: (0..n_tracks).collect(),
            unmatched_detections: (0..n_dets).collect(),
        };
    }
    // bounded lexicographic bonus smaller than any meaningful IoU gap
    let scale = 1e-9 / ((n_tracks + 1) * (n_dets + 1)) as f64;
    let weight = |t: usize, d: usize| -> f64 {
        let w = iou[t][d];
        if w >= gate && w > 0.0 {
            w + scale * ((n_tracks - t) * (n_dets + 1) + (n_dets - d)) as f64
        } else {
            0.0
        }
    };
    let transpose = n_tracks > n_dets;
    let (rows, cols) = if transpose { (n_dets, n_tracks) } else { (n_tracks, n_dets) };
    let cost: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| if transpose { -weight(c, r) } else { -weight(r, c) })
                .collect()
        })
        .collect();
    let assigned = hungarian(&cost, rows, cols);

    let mut track_match = vec![None; n_tracks];
    for (r, &c) in assigned.iter().enumerate() {
        let (t, d) = if transpose { (c, r) } else { (r, c) };
        if iou[t][d] >= gate && iou[t][d] > 0.0 {
            track_match[t] = Some(d);
        }
    }
    let mut det_used = vec![false; n_dets];
    let mut out = Association::default();
    for (t, m) in track_match.iter().enumerate() {
        match m {
            Some(d) => {
                det_used[*d] = true;
                out.matches.push((t, *d));
            }
            None => out.unmatched_tracks.push(t),
        }
    }
    out.unmatched_detections = (0..n_dets).filter(|d| !det_used[*d]).collect();
    out
}

pub fn iou_matrix(tracks: &[OrientedBox], detections: &[OrientedBox]) -> Vec<Vec<f64>> {
    tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| iou_oriented(t, d).unwrap_or(0.0))
                .collect()
        })
        .collect()
}

pub fn associate(tracks: &[OrientedBox], detections: &[OrientedBox], gate_iou: f64) -> Association {
    associate_matrix(&iou_matrix(tracks, detections), detections.len(), gate_iou)
}
