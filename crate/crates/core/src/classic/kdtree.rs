//! Exact k-nearest-neighbour search with a K-D tree.
//!
//! Splits use the axis of maximum spread and the median point along it;
//! leaves hold at most [`LEAF_SIZE`] points. Queries are exact: results
//! match a linear scan, including the lower-index-wins tie rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{squared_distance, FeatureMatrix};
use crate::error::{contract, Error, Result};
use crate::window::Label;

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum KdNode {
    Leaf { indices: Vec<usize> },
    Split { axis: usize, threshold: f32, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    points: FeatureMatrix,
    nodes: Vec<KdNode>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub squared_distance: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.squared_distance.total_cmp(&other.squared_distance).then(self.index.cmp(&other.index))
    }

    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl KdTree {
    pub fn build(points: FeatureMatrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::Contract("cannot build a K-D tree from no points".into()));
        }
        let mut indices: Vec<usize> = (0..points.rows()).collect();
        let mut nodes = Vec::new();
        build_node(&points, &mut indices, &mut nodes);
        Ok(KdTree { points, nodes })
    }

    /// Reassembles a tree from stored parts, checking every point is in exactly one leaf.
    pub fn from_parts(points: FeatureMatrix, nodes: Vec<KdNode>) -> Result<Self> {
        let mut seen = vec![false; points.rows()];
        for node in &nodes {
            match node {
                KdNode::Leaf { indices } => {
                    for &i in indices {
                        if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                            return Err(Error::Checkpoint(format!("point {i} missing or duplicated")));
                        }
                    }
                }
                KdNode::Split { axis, left, right, .. } => {
                    if *axis >= points.cols() || *left >= nodes.len() || *right >= nodes.len() {
                        return Err(Error::Checkpoint("split node out of range".into()));
                    }
                }
            }
        }
        if nodes.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::Checkpoint("tree does not cover every point".into()));
        }
        Ok(KdTree { points, nodes })
    }

    pub fn points(&self) -> &FeatureMatrix {
        &self.points
    }

    pub fn nodes(&self) -> &[KdNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    /// The `k` nearest points ordered by (distance, index).
    pub fn nearest(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.points.cols() {
            return Err(Error::Shape {
                expected: format!("{} features", self.points.cols()),
                found: format!("{}", query.len()),
            });
        }
        if k == 0 || k > self.len() {
            return contract(format!("k = {k} must be in 1..={}", self.len()));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        Ok(heap.into_sorted_vec())
    }

    fn search(&self, node: usize, query: &[f32], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match &self.nodes[node] {
            KdNode::Leaf { indices } => {
                for &i in indices {
                    let n = Neighbor { index: i, squared_distance: squared_distance(self.points.row(i), query) };
                    if heap.len() < k {
                        heap.push(n);
                    } else if n < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(n);
                    }
                }
            }
            &KdNode::Split { axis, threshold, left, right } => {
                let q = query[axis];
                let (near, far) = if q <= threshold { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                let plane = q as f64 - threshold as f64;
                // far-side points are at least `plane` away along this axis; ties must still be visited
                if heap.len() < k || plane * plane <= heap.peek().expect("heap is full").squared_distance {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

fn build_node(points: &FeatureMatrix, indices: &mut [usize], nodes: &mut Vec<KdNode>) -> usize {
    let id = nodes.len();
    if indices.len() <= LEAF_SIZE {
        nodes.push(KdNode::Leaf { indices: indices.to_vec() });
        return id;
    }
    let mut best_axis = 0;
    let mut best_spread = f32::NEG_INFINITY;
    for axis in 0..points.cols() {
        let (lo, hi) = indices.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
            let v = points.get(i, axis);
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_axis = axis;
        }
    }
    indices.sort_by(|&a, &b| points.get(a, best_axis).total_cmp(&points.get(b, best_axis)).then(a.cmp(&b)));
    let mid = indices.len() / 2;
    let threshold = points.get(indices[mid], best_axis);
    nodes.push(KdNode::Leaf { indices: Vec::new() });
    let (l, r) = indices.split_at_mut(mid);
    let left = build_node(points, l, nodes);
    let right = build_node(points, r, nodes);
    nodes[id] = KdNode::Split { axis: best_axis, threshold, left, right };
    id
}

/// Majority vote of the `k` nearest neighbours; a tie goes to Down.
pub fn knn_classify(tree: &KdTree, labels: &[Label], query: &[f32], k: usize) -> Result<(Label, Vec<Neighbor>)> {
    if labels.len() != tree.len() {
        return contract(format!("{} labels for {} points", labels.len(), tree.len()));
    }
    let neighbors = tree.nearest(query, k)?;
    let up = neighbors.iter().filter(|n| labels[n.index] == Label::Up).count();
    let label = if 2 * up > neighbors.len() { Label::Up } else { Label::Down };
    Ok((label, neighbors))
}
