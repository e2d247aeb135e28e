//! Exact k-nearest-neighbour search over 3D points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{dist2, Point3};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree. Ties between equidistant points are broken by ascending
/// point index, so results are fully deterministic.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
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
            for c in 0..3 {
                lo[c] = lo[c].min(self.points[i][c]);
                hi[c] = hi[c].max(self.points[i][c]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        if hi[axis] - lo[axis] == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
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

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `k` nearest points to `query` as `(index, distance)`, ascending.
    pub fn knn(&self, query: Point3, k: usize) -> Vec<(usize, f64)> {
        self.search(query, k, None)
    }

    /// Like [`KdTree::knn`] but never returns `exclude`; used when querying
    /// by the index of a point already in the tree.
    pub fn knn_excluding(&self, query: Point3, k: usize, exclude: usize) -> Vec<(usize, f64)> {
        self.search(query, k, Some(exclude))
    }

    pub fn nearest(&self, query: Point3) -> Option<(usize, f64)> {
        self.search(query, 1, None).into_iter().next()
    }

    /// Nearest point with its squared distance.
    pub fn nearest_squared(&self, query: Point3) -> Option<(usize, f64)> {
        self.candidates(query, 1, None).into_iter().next().map(|c| (c.index, c.d2))
    }

    fn search(&self, query: Point3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        self.candidates(query, k, exclude).into_iter().map(|c| (c.index, c.d2.sqrt())).collect()
    }

    fn candidates(&self, query: Point3, k: usize, exclude: Option<usize>) -> Vec<Candidate> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.visit(0, query, k, exclude, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out
    }

    fn visit(&self, node: usize, query: Point3, k: usize, exclude: Option<usize>, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    if Some(index) == exclude {
                        continue;
                    }
                    let cand = Candidate { d2: dist2(query, self.points[index]), index };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, query, k, exclude, heap);
                // equality must still descend: an equidistant point with a
                // smaller index may sit on the far side
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").d2 {
                    self.visit(far, query, k, exclude, heap);
                }
            }
        }
    }
}
