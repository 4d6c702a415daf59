//! Baseline classifiers on flattened chart pixels.

pub mod container;
pub mod forest;
pub mod kdtree;

pub use forest::{DecisionTree, Forest, ForestParams, ForestTree, MaxFeatures, TreeNode, TreeParams};
pub use kdtree::{knn_classify, KdNode, KdTree, Neighbor};

use crate::error::{shape_err, Result};
use crate::nn::Tensor;

/// Row-major `n × d` matrix of f32 features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return shape_err([rows, cols], data.len());
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    /// Stacks flattened tensors as rows; all must have the same length.
    pub fn from_tensors(tensors: &[Tensor<f32>]) -> Result<Self> {
        let cols = tensors.first().map_or(0, |t| t.len());
        let mut data = Vec::with_capacity(cols * tensors.len());
        for t in tensors {
            if t.len() != cols {
                return shape_err(cols, t.len());
            }
            data.extend_from_slice(t.data());
        }
        Self::new(tensors.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }
}

/// Squared Euclidean distance, accumulated in f64.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}
