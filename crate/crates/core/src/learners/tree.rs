//! CART classification trees with Gini impurity.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum training rows in each child of a split.
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 3, min_leaf: 5 }
    }
}

/// A binary tree node. Rows with `value <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf { positive_fraction: f64, n_train: usize },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
                TreeNode::Leaf { positive_fraction, .. } => return *positive_fraction,
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    /// Visits `(feature, threshold)` of every split, root first, left before
    /// right.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let TreeNode::Split { feature, threshold, left, right } = node {
                out.push((*feature, *threshold));
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}

/// Which features a split search may look at.
pub enum FeatureSampler<'a> {
    All,
    /// A fresh uniform draw of `count` features (without replacement) at
    /// every node.
    Random { count: usize, rng: &'a mut Stream },
}

impl FeatureSampler<'_> {
    fn draw(&mut self, p: usize) -> Vec<usize> {
        match self {
            FeatureSampler::All => (0..p).collect(),
            FeatureSampler::Random { count, rng } => {
                let mut f = index::sample(*rng, p, (*count).min(p)).into_vec();
                f.sort_unstable();
                f
            }
        }
    }
}

/// `n · gini` for a node with `pos` positives out of `n`.
#[inline]
fn weighted_gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (p, q, n) = (pos as f64, (n - pos) as f64, n as f64);
    n - (p * p + q * q) / n
}

/// Split improvements smaller than this are treated as ties or no gain.
const TIE_EPS: f64 = 1e-12;

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn best_split(x: &Matrix, y: &[bool], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<Candidate> {
    let n = rows.len();
    let total_pos = rows.iter().filter(|&&r| y[r]).count();
    let parent = weighted_gini(total_pos, n);
    let mut best: Option<Candidate> = None;
    let mut order: Vec<(f64, bool)> = Vec::with_capacity(n);
    for &f in features {
        order.clear();
        order.extend(rows.iter().map(|&r| (x.get(r, f), y[r])));
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_pos = 0;
        for i in 0..n - 1 {
            if order[i].1 {
                left_pos += 1;
            }
            let n_left = i + 1;
            if order[i].0 == order[i + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let impurity = weighted_gini(left_pos, n_left) + weighted_gini(total_pos - left_pos, n - n_left);
            if impurity >= parent - TIE_EPS {
                continue;
            }
            if best.as_ref().is_none_or(|b| impurity < b.impurity - TIE_EPS) {
                best = Some(Candidate { feature: f, threshold: 0.5 * (order[i].0 + order[i + 1].0), impurity });
            }
        }
    }
    best
}

/// Grows a CART tree on `rows` of `x` (duplicates allowed, as in bootstrap
/// samples).
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// The split with the lowest weighted child impurity wins; ties go to the
/// lower feature index, then the lower threshold. Nodes stop at
/// `max_depth`, when pure, or when no split leaves `min_leaf` rows per side
/// and reduces impurity.
pub fn grow_tree(x: &Matrix, y: &[bool], rows: &[usize], params: &TreeParams, sampler: &mut FeatureSampler) -> TreeNode {
    grow(x, y, rows, params, sampler, 0)
}

fn grow(x: &Matrix, y: &[bool], rows: &[usize], params: &TreeParams, sampler: &mut FeatureSampler, depth: usize) -> TreeNode {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| y[r]).count();
    let leaf = TreeNode::Leaf { positive_fraction: if n == 0 { 0.0 } else { pos as f64 / n as f64 }, n_train: n };
    if depth >= params.max_depth || pos == 0 || pos == n || n < 2 * params.min_leaf {
        return leaf;
    }
    let features = sampler.draw(x.cols());
    let Some(split) = best_split(x, y, rows, &features, params.min_leaf) else {
        return leaf;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x.get(r, split.feature) <= split.threshold);
    let left = grow(x, y, &left_rows, params, sampler, depth + 1);
    let right = grow(x, y, &right_rows, params, sampler, depth + 1);
    TreeNode::Split { feature: split.feature, threshold: split.threshold, left: Box::new(left), right: Box::new(right) }
}

/// Row-weighted mean Gini impurity of the leaves a tree assigns `rows` to.
pub fn training_gini(tree: &TreeNode, x: &Matrix, y: &[bool], rows: &[usize]) -> f64 {
    use std::collections::BTreeMap;
    // leaves keyed by their path from the root
    let mut leaves: BTreeMap<Vec<bool>, (usize, usize)> = BTreeMap::new();
    for &r in rows {
        let mut node = tree;
        let mut path = Vec::new();
        while let TreeNode::Split { feature, threshold, left, right } = node {
            let go_left = x.get(r, *feature) <= *threshold;
            path.push(go_left);
            node = if go_left { left } else { right };
        }
        let e = leaves.entry(path).or_default();
        e.0 += 1;
        if y[r] {
            e.1 += 1;
        }
    }
    leaves.values().map(|&(n, p)| weighted_gini(p, n)).sum::<f64>() / rows.len() as f64
}
