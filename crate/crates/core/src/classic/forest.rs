//! Gini decision trees and a bagged random forest.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::FeatureMatrix;
use crate::error::{contract, Error, Result};
use crate::seed::mix;
use crate::window::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    /// floor(sqrt(d)), at least 1.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(n) => n.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_features: MaxFeatures::All, min_samples_split: 2, max_depth: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Training counts `[down, up]` reaching this leaf.
    Leaf { counts: [u64; 2] },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f32, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

/// Candidate split scored by Σ_child (down² + up²) / n_child, kept as an
/// exact fraction so ties compare exactly. Larger is purer.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    num: u128,
    den: u128,
    feature: usize,
    threshold: f32,
    left_len: usize,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        let ord = (self.num * other.den)
            .cmp(&(other.num * self.den))
            .then(other.feature.cmp(&self.feature))
            .then(other.threshold.total_cmp(&self.threshold));
        ord == Ordering::Greater
    }
}

fn sq(v: u64) -> u128 {
    (v as u128) * (v as u128)
}

/// Best split of `rows` on one feature, or `None` if the feature is constant.
fn best_split_on(x: &FeatureMatrix, y: &[Label], rows: &[usize], feature: usize) -> Option<Candidate> {
    let mut pairs: Vec<(f32, usize)> = rows.iter().map(|&r| (x.get(r, feature), y[r].index())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = [0u64; 2];
    for &(_, l) in &pairs {
        total[l] += 1;
    }
    let n = pairs.len() as u64;
    let mut left = [0u64; 2];
    let mut best: Option<Candidate> = None;
    for i in 0..pairs.len() - 1 {
        left[pairs[i].1] += 1;
        if pairs[i].0 == pairs[i + 1].0 {
            continue;
        }
        let nl = i as u64 + 1;
        let nr = n - nl;
        let right = [total[0] - left[0], total[1] - left[1]];
        let cand = Candidate {
            num: (sq(left[0]) + sq(left[1])) * nr as u128 + (sq(right[0]) + sq(right[1])) * nl as u128,
            den: nl as u128 * nr as u128,
            feature,
            threshold: pairs[i].0,
            left_len: nl as usize,
        };
        if best.as_ref().is_none_or(|b| cand.better_than(b)) {
            best = Some(cand);
        }
    }
    best
}

fn counts(y: &[Label], rows: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &r in rows {
        c[y[r].index()] += 1;
    }
    c
}

fn majority(counts: [u64; 2]) -> Label {
    if counts[1] > counts[0] {
        Label::Up
    } else {
        Label::Down
    }
}

impl DecisionTree {
    /// Fits on `rows` (indices into `x`, duplicates allowed for bootstrap samples).
    /// `rng` drives the per-node feature subset when `max_features` < d.
    pub fn fit_rows<R: Rng + ?Sized>(
        x: &FeatureMatrix,
        y: &[Label],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut R,
    ) -> Result<Self> {
        if y.len() != x.rows() {
            return contract(format!("{} labels for {} rows", y.len(), x.rows()));
        }
        if rows.is_empty() {
            return contract("cannot fit a tree on no samples");
        }
        let mut nodes = Vec::new();
        let mut rows = rows.to_vec();
        grow(x, y, &mut rows, params, 0, rng, &mut nodes);
        Ok(DecisionTree { nodes })
    }

    /// Fits on every row with all features considered at each split.
    pub fn fit(x: &FeatureMatrix, y: &[Label], params: &TreeParams) -> Result<Self> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        Self::fit_rows(x, y, &rows, params, &mut ChaCha8Rng::seed_from_u64(0))
    }

    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Checkpoint("empty tree".into()));
        }
        for n in &nodes {
            if let TreeNode::Split { left, right, .. } = n {
                if *left >= nodes.len() || *right >= nodes.len() {
                    return Err(Error::Checkpoint("child index out of range".into()));
                }
            }
        }
        Ok(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    fn leaf_for(&self, sample: &[f32]) -> [u64; 2] {
        let mut i = 0;
        // bounded by node count so a malformed (cyclic) tree cannot spin forever
        for _ in 0..=self.nodes.len() {
            match self.nodes[i] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if sample.get(feature).is_some_and(|&v| v <= threshold) { left } else { right };
                }
            }
        }
        [0, 0]
    }

    pub fn predict(&self, sample: &[f32]) -> Label {
        majority(self.leaf_for(sample))
    }
}

fn grow<R: Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[Label],
    rows: &mut [usize],
    params: &TreeParams,
    depth: usize,
    rng: &mut R,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    let c = counts(y, rows);
    nodes.push(TreeNode::Leaf { counts: c });
    let pure = c[0] == 0 || c[1] == 0;
    if pure || rows.len() < params.min_samples_split.max(2) || params.max_depth.is_some_and(|d| depth >= d) {
        return id;
    }

    let d = x.cols();
    let wanted = params.max_features.resolve(d);
    let mut order: Vec<usize> = (0..d).collect();
    if wanted < d {
        order.shuffle(rng);
    }
    // constant features don't count toward the budget
    let mut evaluated = 0;
    let mut best: Option<Candidate> = None;
    for &f in &order {
        if evaluated == wanted {
            break;
        }
        if let Some(cand) = best_split_on(x, y, rows, f) {
            evaluated += 1;
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                best = Some(cand);
            }
        }
    }
    let Some(best) = best else { return id };

    rows.sort_by(|&a, &b| x.get(a, best.feature).total_cmp(&x.get(b, best.feature)).then(a.cmp(&b)));
    let (l, r) = rows.split_at_mut(best.left_len);
    let left = grow(x, y, l, params, depth + 1, rng, nodes);
    let right = grow(x, y, r, params, depth + 1, rng, nodes);
    nodes[id] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left, right };
    id
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            tree: TreeParams { max_features: MaxFeatures::Sqrt, ..TreeParams::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestTree {
    pub bootstrap_seed: u64,
    pub feature_seed: u64,
    pub tree: DecisionTree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub n_features: usize,
    pub trees: Vec<ForestTree>,
    /// Set when training data held a single class.
    pub degenerate: bool,
}

impl Forest {
    /// Bagged Gini trees; identical output for identical `seed`.
    pub fn fit(x: &FeatureMatrix, y: &[Label], params: &ForestParams, seed: u64) -> Result<Self> {
        if x.rows() < 2 {
            return contract(format!("forest needs >= 2 samples, got {}", x.rows()));
        }
        if y.len() != x.rows() {
            return contract(format!("{} labels for {} rows", y.len(), x.rows()));
        }
        if params.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        let c = counts(y, &(0..y.len()).collect::<Vec<_>>());
        let n = x.rows();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let bootstrap_seed = mix(seed, &[t as u64, 0]);
                let feature_seed = mix(seed, &[t as u64, 1]);
                let rows: Vec<usize> = if params.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap_seed);
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
                let tree = DecisionTree::fit_rows(x, y, &rows, &params.tree, &mut rng)?;
                Ok(ForestTree { bootstrap_seed, feature_seed, tree })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest { n_features: x.cols(), trees, degenerate: c[0] == 0 || c[1] == 0 })
    }

    /// Majority vote (ties → Down) and the fraction of trees voting for that label.
    pub fn predict(&self, sample: &[f32]) -> (Label, f64) {
        let up = self.trees.iter().filter(|t| t.tree.predict(sample) == Label::Up).count();
        let total = self.trees.len().max(1);
        if 2 * up > total {
            (Label::Up, up as f64 / total as f64)
        } else {
            (Label::Down, (total - up) as f64 / total as f64)
        }
    }
}
