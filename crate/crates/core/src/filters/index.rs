//! Exact k-d tree over a point cloud.
//!
//! All queries exclude the query point itself by index, not by distance, so
//! duplicate points still count as neighbours of each other.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::FilterError;
use crate::types::PointCloud;

const LEAF_SIZE: usize = 8;

/// Squared Euclidean distance. Every neighbour test in the crate goes through
/// this function so fast and exhaustive paths round identically.
#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.coords.clone())
    }

    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        let mut index = Self { order: (0..points.len()).collect(), points, nodes: Vec::new() };
        if !index.points.is_empty() {
            index.build_node(0, index.points.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        if hi[axis] == lo[axis] {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64; 3] {
        &self.points[i]
    }

    fn check(&self, i: usize) -> Result<(), FilterError> {
        if self.points.is_empty() {
            Err(FilterError::EmptyIndex)
        } else if i >= self.points.len() {
            Err(FilterError::IndexOutOfBounds(i))
        } else {
            Ok(())
        }
    }

    /// Number of other points with distance <= `radius` from point `i`.
    pub fn radius_count(&self, i: usize, radius: f64) -> Result<usize, FilterError> {
        self.check(i)?;
        let r2 = radius * radius;
        let q = self.points[i];
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match self.nodes[n] {
                Node::Leaf { start, end } => {
                    for &j in &self.order[start..end] {
                        if j != i && dist2(&q, &self.points[j]) <= r2 {
                            count += 1;
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = q[axis] - value;
                    // left holds coordinates <= value, right >= value
                    if diff <= 0.0 || diff * diff <= r2 {
                        stack.push(left);
                    }
                    if diff >= 0.0 || diff * diff <= r2 {
                        stack.push(right);
                    }
                }
            }
        }
        Ok(count)
    }

    /// Squared distances to the `k` nearest other points, ascending.
    /// Fewer are returned when the cloud has fewer than `k + 1` points.
    pub fn knn_dist2(&self, i: usize, k: usize) -> Result<Vec<f64>, FilterError> {
        self.check(i)?;
        let q = self.points[i];
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.knn_visit(0, &q, Some(i), k, &mut heap);
        }
        let mut out: Vec<f64> = heap.into_iter().map(|c| c.d2).collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }

    fn knn_visit(
        &self,
        n: usize,
        q: &[f64; 3],
        skip: Option<usize>,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[n] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if Some(j) == skip {
                        continue;
                    }
                    let c = Candidate { d2: dist2(q, &self.points[j]), index: j };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, q, skip, k, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.knn_visit(far, q, skip, k, heap);
                }
            }
        }
    }

    /// Nearest indexed point to an arbitrary query; exact ties go to the lowest index.
    pub fn nearest(&self, q: &[f64; 3]) -> Result<usize, FilterError> {
        if self.points.is_empty() {
            return Err(FilterError::EmptyIndex);
        }
        let mut heap = BinaryHeap::with_capacity(2);
        self.knn_visit(0, q, None, 1, &mut heap);
        Ok(heap.pop().unwrap().index)
    }
}
