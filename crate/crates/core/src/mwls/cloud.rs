//! Scattered 2-D point sets with exact k-nearest-neighbor queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Points closer than this are treated as duplicates.
pub const MIN_SEPARATION: f64 = 1e-10;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// An immutable point cloud with a k-d tree index.
///
/// Queries are exact; ties in distance are broken by ascending point index
/// so neighbor sets are reproducible.
#[derive(Debug, Clone)]
pub struct PointCloud {
    positions: Vec<[f64; 2]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PointCloud {
    /// Builds the index. Rejects non-finite coordinates and duplicate points.
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(i) = positions.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::NonFinitePoint(i));
        }
        let mut cloud = Self {
            order: (0..positions.len()).collect(),
            positions,
            nodes: Vec::new(),
        };
        if !cloud.positions.is_empty() {
            let n = cloud.positions.len();
            cloud.build(0, n);
        }
        cloud.check_duplicates()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> [f64; 2] {
        self.positions[i]
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        }))
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &i in &self.order[start..end] {
            let p = self.positions[i];
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        let mid = start + (end - start) / 2;
        let positions = &self.positions;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            positions[a][axis].total_cmp(&positions[b][axis]).then(a.cmp(&b))
        });
        let value = self.positions[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn check_duplicates(&self) -> Result<()> {
        if self.positions.len() < 2 {
            return Ok(());
        }
        for (i, p) in self.positions.iter().enumerate() {
            for j in self.nearest_unchecked(*p, 2) {
                if j == i {
                    continue;
                }
                let q = self.positions[j];
                let sep = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                if sep < MIN_SEPARATION {
                    return Err(Error::DuplicatePoint {
                        first: i.min(j),
                        second: i.max(j),
                        separation: sep,
                    });
                }
            }
        }
        Ok(())
    }

    /// The `n` points nearest to `target`, closest first.
    pub fn find_neighbors(&self, target: [f64; 2], n: usize) -> Result<Vec<usize>> {
        if n > self.positions.len() {
            return Err(Error::Sizing {
                available: self.positions.len(),
                requested: n,
            });
        }
        Ok(self.nearest_unchecked(target, n))
    }

    /// Index and distance of the single nearest point.
    pub fn nearest(&self, target: [f64; 2]) -> Option<(usize, f64)> {
        let i = *self.nearest_unchecked(target, 1).first()?;
        let p = self.positions[i];
        Some((i, ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2)).sqrt()))
    }

    fn nearest_unchecked(&self, target: [f64; 2], n: usize) -> Vec<usize> {
        if n == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(n + 1);
        self.search(0, target, n, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        found.into_iter().map(|c| c.index).collect()
    }

    fn search(&self, node: usize, target: [f64; 2], n: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let p = self.positions[index];
                    let cand = Candidate {
                        dist2: (p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2),
                        index,
                    };
                    if heap.len() < n {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = target[axis] - value;
                let (near, far) = if delta < 0.0 { (left, right) } else { (right, left) };
                self.search(near, target, n, heap);
                // Equal distances must still be visited for the index tie-break.
                if heap.len() < n || delta * delta <= heap.peek().expect("heap is full").dist2 {
                    self.search(far, target, n, heap);
                }
            }
        }
    }

    /// Convex hull vertices in counter-clockwise order.
    pub fn convex_hull(&self) -> Vec<[f64; 2]> {
        let mut pts = self.positions.clone();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        if pts.len() < 3 {
            return pts;
        }
        let cross =
            |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
        for &p in &pts {
            while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        let lower = hull.len() + 1;
        for &p in pts.iter().rev().skip(1) {
            while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
        hull
    }
}

/// Whether `p` lies inside or on a counter-clockwise convex polygon.
pub fn inside_convex(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_force(points: &[[f64; 2]], target: [f64; 2], n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let d2 = |i: usize| (points[i][0] - target[0]).powi(2) + (points[i][1] - target[1]).powi(2);
        idx.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }

    #[test]
    fn coincident_target_comes_first() {
        let pts = vec![[0.0, 0.0], [1.0, 0.5], [0.3, 0.2], [2.0, 2.0]];
        let cloud = PointCloud::new(pts).unwrap();
        assert_eq!(cloud.find_neighbors([0.3, 0.2], 2).unwrap()[0], 2);
    }

    #[test]
    fn ties_break_by_index() {
        let pts = vec![[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]];
        let cloud = PointCloud::new(pts).unwrap();
        assert_eq!(cloud.find_neighbors([0.0, 0.0], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn grid_cell_center_gets_its_corners() {
        let mut pts = Vec::new();
        for j in 0..40 {
            for i in 0..40 {
                pts.push([i as f64 * 0.1, j as f64 * 0.1]);
            }
        }
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let target = [1.25, 2.05];
        let mut got = cloud.find_neighbors(target, 4).unwrap();
        let expected = brute_force(&pts, target, 4);
        assert_eq!(got, expected);
        got.sort();
        assert_eq!(got, vec![20 * 40 + 12, 20 * 40 + 13, 21 * 40 + 12, 21 * 40 + 13]);
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let pts: Vec<[f64; 2]> = (0..700)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)])
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        for _ in 0..200 {
            let t = [rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)];
            for n in [1, 10, 35] {
                assert_eq!(cloud.find_neighbors(t, n).unwrap(), brute_force(&pts, t, n));
            }
        }
    }

    #[test]
    fn too_small_cloud_is_a_sizing_error() {
        let cloud = PointCloud::new(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            cloud.find_neighbors([0.0, 0.0], 3),
            Err(Error::Sizing {
                available: 2,
                requested: 3
            })
        ));
    }

    #[test]
    fn duplicates_rejected() {
        let err = PointCloud::new(vec![[0.0, 0.0], [1.0, 1.0], [0.0, 5e-11]]).unwrap_err();
        assert!(matches!(
            err,
            Error::DuplicatePoint {
                first: 0,
                second: 2,
                ..
            }
        ));
        assert!(PointCloud::new(vec![[0.0, 0.0], [f64::NAN, 1.0]]).is_err());
    }

    #[test]
    fn hull_membership() {
        let cloud = PointCloud::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]).unwrap();
        let hull = cloud.convex_hull();
        assert_eq!(hull.len(), 4);
        assert!(inside_convex(&hull, [0.2, 0.9]));
        assert!(inside_convex(&hull, [1.0, 0.5]));
        assert!(!inside_convex(&hull, [1.5, 0.5]));
    }
}
