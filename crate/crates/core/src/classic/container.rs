//! `CFM1` model container for the K-D tree kNN and the random forest.
//!
//! ```text
//! "CFM1"  kind:u64 (1 = knn, 2 = forest)
//! knn:    k, rows, cols, leaf_size; rows*cols f32; rows label bytes (0 down, 1 up);
//!         node_count; nodes
//! forest: n_features, degenerate (u64 0/1), tree_count;
//!         per tree: bootstrap_seed, feature_seed, node_count; nodes
//! node:   tag u8, then
//!         kd leaf   (0): count, indices...
//!         kd split  (1): axis, threshold f32, left, right
//!         tree leaf (2): down_count, up_count
//!         tree split(3): feature, threshold f32, left, right
//! ```
//! Integers are u64 and all values little-endian.

use std::io::Read;

use super::forest::{DecisionTree, Forest, ForestTree, TreeNode};
use super::kdtree::{KdNode, KdTree, LEAF_SIZE};
use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::tensor::{read_f32s, read_u64, write_f32s, write_u64, MAX_ELEMENTS};
use crate::window::Label;

pub const MODEL_MAGIC: &[u8; 4] = b"CFM1";
const KIND_KNN: u64 = 1;
const KIND_FOREST: u64 = 2;

/// A fitted kNN model: the tree, its labels and `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub tree: KdTree,
    pub labels: Vec<Label>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassicModel {
    Knn(KnnModel),
    Forest(Forest),
}

fn put(out: &mut Vec<u8>, v: u64) {
    write_u64(out, v).expect("vec write");
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_model(model: &ClassicModel) -> Vec<u8> {
    let mut out = MODEL_MAGIC.to_vec();
    match model {
        ClassicModel::Knn(m) => {
            put(&mut out, KIND_KNN);
            let pts = m.tree.points();
            for v in [m.k, pts.rows(), pts.cols(), LEAF_SIZE] {
                put(&mut out, v as u64);
            }
            write_f32s(&mut out, pts.raw()).expect("vec write");
            out.extend(m.labels.iter().map(|l| l.index() as u8));
            put(&mut out, m.tree.nodes().len() as u64);
            for node in m.tree.nodes() {
                match node {
                    KdNode::Leaf { indices } => {
                        out.push(0);
                        put(&mut out, indices.len() as u64);
                        for &i in indices {
                            put(&mut out, i as u64);
                        }
                    }
                    KdNode::Split { axis, threshold, left, right } => {
                        out.push(1);
                        put(&mut out, *axis as u64);
                        put_f32(&mut out, *threshold);
                        put(&mut out, *left as u64);
                        put(&mut out, *right as u64);
                    }
                }
            }
        }
        ClassicModel::Forest(f) => {
            put(&mut out, KIND_FOREST);
            put(&mut out, f.n_features as u64);
            put(&mut out, f.degenerate as u64);
            put(&mut out, f.trees.len() as u64);
            for t in &f.trees {
                put(&mut out, t.bootstrap_seed);
                put(&mut out, t.feature_seed);
                put(&mut out, t.tree.nodes().len() as u64);
                for node in t.tree.nodes() {
                    match node {
                        TreeNode::Leaf { counts } => {
                            out.push(2);
                            put(&mut out, counts[0]);
                            put(&mut out, counts[1]);
                        }
                        TreeNode::Split { feature, threshold, left, right } => {
                            out.push(3);
                            put(&mut out, *feature as u64);
                            put_f32(&mut out, *threshold);
                            put(&mut out, *left as u64);
                            put(&mut out, *right as u64);
                        }
                    }
                }
            }
        }
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn u64(&mut self) -> Result<u64> {
        read_u64(&mut self.0).map_err(|e| Error::Checkpoint(format!("truncated model: {e}")))
    }

    /// A count that must fit in what's left of the buffer given `unit` bytes per item.
    fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_ELEMENTS || n as usize * unit > self.0.len() {
            return Err(Error::Checkpoint(format!("count {n} exceeds remaining data")));
        }
        Ok(n as usize)
    }

    fn byte(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated model: {e}")))?;
        Ok(b[0])
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(self.f32s(1)?[0])
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        read_f32s(&mut self.0, n).map_err(|e| Error::Checkpoint(format!("truncated model: {e}")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ClassicModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::Checkpoint("missing CFM1 magic".into()));
    }
    let mut c = Cursor(&bytes[4..]);
    let model = match c.u64()? {
        KIND_KNN => {
            let k = c.u64()? as usize;
            let rows = c.u64()? as usize;
            let cols = c.u64()? as usize;
            let _leaf = c.u64()?;
            let total = rows.checked_mul(cols).filter(|&t| t * 4 <= c.0.len());
            let total = total.ok_or_else(|| Error::Checkpoint("point block exceeds file".into()))?;
            let points = FeatureMatrix::new(rows, cols, c.f32s(total)?)?;
            let labels = (0..rows)
                .map(|_| match c.byte()? {
                    0 => Ok(Label::Down),
                    1 => Ok(Label::Up),
                    b => Err(Error::Checkpoint(format!("bad label byte {b}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let n_nodes = c.count(1)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match c.byte()? {
                    0 => {
                        let n = c.count(8)?;
                        KdNode::Leaf { indices: (0..n).map(|_| c.u64().map(|v| v as usize)).collect::<Result<_>>()? }
                    }
                    1 => KdNode::Split {
                        axis: c.u64()? as usize,
                        threshold: c.f32()?,
                        left: c.u64()? as usize,
                        right: c.u64()? as usize,
                    },
                    t => return Err(Error::Checkpoint(format!("bad kd node tag {t}"))),
                });
            }
            if k == 0 || k > rows {
                return Err(Error::Checkpoint(format!("k = {k} invalid for {rows} points")));
            }
            ClassicModel::Knn(KnnModel { tree: KdTree::from_parts(points, nodes)?, labels, k })
        }
        KIND_FOREST => {
            let n_features = c.u64()? as usize;
            let degenerate = c.u64()? != 0;
            let n_trees = c.count(24)?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let bootstrap_seed = c.u64()?;
                let feature_seed = c.u64()?;
                let n_nodes = c.count(1)?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    nodes.push(match c.byte()? {
                        2 => TreeNode::Leaf { counts: [c.u64()?, c.u64()?] },
                        3 => TreeNode::Split {
                            feature: c.u64()? as usize,
                            threshold: c.f32()?,
                            left: c.u64()? as usize,
                            right: c.u64()? as usize,
                        },
                        t => return Err(Error::Checkpoint(format!("bad tree node tag {t}"))),
                    });
                }
                trees.push(ForestTree { bootstrap_seed, feature_seed, tree: DecisionTree::from_nodes(nodes)? });
            }
            ClassicModel::Forest(Forest { n_features, trees, degenerate })
        }
        kind => return Err(Error::Checkpoint(format!("unknown model kind {kind}"))),
    };
    if !c.0.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", c.0.len())));
    }
    Ok(model)
}
