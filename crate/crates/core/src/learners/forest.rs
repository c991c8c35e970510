use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeatureSampler, TreeNode, TreeParams};
use crate::linalg::Matrix;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per split; `None` means `ceil(sqrt(p))`.
    pub max_features: Option<usize>,
    /// Resample rows with replacement for each tree. Off only in tests.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 8, min_leaf: 1, max_features: None, bootstrap: true }
    }
}

impl ForestParams {
    pub fn features_per_split(&self, p: usize) -> usize {
        self.max_features.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p.max(1))
    }
}

/// Seed of tree `t`'s private stream: the `t`-th draw from the fit stream.
pub fn forest_tree_seed(rng: &mut Stream) -> u64 {
    rng.random()
}

/// Bagged CART trees. Each tree owns a stream seeded from `rng`, used first
/// for the bootstrap sample and then for per-split feature draws.
pub fn fit_forest(x: &Matrix, y: &[bool], params: &ForestParams, rng: &mut Stream) -> Vec<TreeNode> {
    let n = x.rows();
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf };
    let count = params.features_per_split(x.cols());
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| forest_tree_seed(rng)).collect();
    seeds
        .into_iter()
        .map(|seed| {
            let mut tree_rng = Stream::seed_from_u64(seed);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| tree_rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, &rows, &tree_params, &mut FeatureSampler::Random { count, rng: &mut tree_rng })
        })
        .collect()
}
