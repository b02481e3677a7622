use std::collections::HashMap;

use super::PointCloud;

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Euclidean connectivity clustering in the ground plane.
///
/// Two points are linked when their x-y distance is at most `eps_m`; groups
/// are the connected components with at least `min_cluster_size` members.
/// Each group lists point indices in ascending order and groups are ordered
/// by their first index.
pub fn cluster(cloud: &PointCloud, eps_m: f64, min_cluster_size: usize) -> Vec<Vec<usize>> {
    assert!(eps_m > 0.0, "eps must be positive");
    assert!(min_cluster_size >= 1, "min_cluster_size must be at least 1");
    let pts = &cloud.points;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let key = |x: f64, y: f64| ((x / eps_m).floor() as i64, (y / eps_m).floor() as i64);
    for (i, p) in pts.iter().enumerate() {
        grid.entry(key(p.x, p.y)).or_default().push(i);
    }

    let eps2 = eps_m * eps_m;
    let mut sets = DisjointSet::new(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let (gx, gy) = key(p.x, p.y);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(cell) = grid.get(&(gx + dx, gy + dy)) else {
                    continue;
                };
                for &j in cell {
                    if j <= i {
                        continue;
                    }
                    let q = &pts[j];
                    let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
                    if d2 <= eps2 {
                        sets.union(i, j);
                    }
                }
            }
        }
    }

    let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..pts.len() {
        let r = sets.find(i);
        by_root.entry(r).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_root
        .into_values()
        .filter(|g| g.len() >= min_cluster_size)
        .collect();
    groups.sort_by_key(|g| g[0]);
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;

    fn cloud(xy: &[(f64, f64)]) -> PointCloud {
        PointCloud::new(
            xy.iter().map(|&(x, y)| Point::new(x, y, 0.0, 1.0, 0)).collect(),
            1,
            "c",
        )
        .unwrap()
    }

    #[test]
    fn two_separated_blobs() {
        let mut xy = Vec::new();
        for i in 0..6 {
            xy.push((0.1 * i as f64, 0.0));
            xy.push((10.0 + 0.1 * i as f64, 0.0));
        }
        let groups = cluster(&cloud(&xy), 0.5, 5);
        assert_eq!(groups.len(), 2);
        assert!(groups.iter().all(|g| g.len() == 6));
    }

    #[test]
    fn single_point_below_min_size() {
        assert!(cluster(&cloud(&[(1.0, 1.0)]), 0.5, 2).is_empty());
    }

    #[test]
    fn chain_is_transitive() {
        // consecutive points 0.4 apart; ends are 3.6 apart
        let xy: Vec<_> = (0..10).map(|i| (0.4 * i as f64, 0.0)).collect();
        let groups = cluster(&cloud(&xy), 0.5, 1);
        assert_eq!(groups, vec![(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn z_is_ignored() {
        let mut c = cloud(&[(0.0, 0.0), (0.0, 0.1)]);
        c.points[1].z = 50.0;
        assert_eq!(cluster(&c, 0.5, 1).len(), 1);
    }
}
