//! The five classifier families behind one fit/score interface.
//!
//! Every fitted model maps a patient to a finite real score where higher
//! means a more likely positive outcome, which is all rank-based AUC needs.

mod forest;
mod knn;
mod logistic;
mod svm;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Stream;

pub use forest::{fit_forest, forest_tree_seed, ForestParams};
pub use knn::{knn_score, KnnParams};
pub use logistic::{fit_logistic, logistic_gradient, logistic_objective, LogisticFit, LogisticParams};
pub use svm::{fit_svm, SvmFit, SvmParams};
pub use tree::{grow_tree, training_gini, FeatureSampler, TreeNode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    LogisticRegression,
    LinearSvm,
    Knn,
    DecisionTree,
    RandomForest,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::LogisticRegression,
        ModelFamily::LinearSvm,
        ModelFamily::Knn,
        ModelFamily::DecisionTree,
        ModelFamily::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::LogisticRegression => "logistic_regression",
            ModelFamily::LinearSvm => "linear_svm",
            ModelFamily::Knn => "knn",
            ModelFamily::DecisionTree => "decision_tree",
            ModelFamily::RandomForest => "random_forest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown model family `{}`", s.trim())))
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Family-specific hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    LogisticRegression(LogisticParams),
    LinearSvm(SvmParams),
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
}

impl ModelSpec {
    /// The documented defaults for a family.
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::LogisticRegression => ModelSpec::LogisticRegression(LogisticParams::default()),
            ModelFamily::LinearSvm => ModelSpec::LinearSvm(SvmParams::default()),
            ModelFamily::Knn => ModelSpec::Knn(KnnParams::default()),
            ModelFamily::DecisionTree => ModelSpec::DecisionTree(TreeParams::default()),
            ModelFamily::RandomForest => ModelSpec::RandomForest(ForestParams::default()),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::LogisticRegression(_) => ModelFamily::LogisticRegression,
            ModelSpec::LinearSvm(_) => ModelFamily::LinearSvm,
            ModelSpec::Knn(_) => ModelFamily::Knn,
            ModelSpec::DecisionTree(_) => ModelFamily::DecisionTree,
            ModelSpec::RandomForest(_) => ModelFamily::RandomForest,
        }
    }

    /// Sets one hyperparameter by key, e.g. `("k", "7")` for knn.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<()> {
        let family = self.family();
        let bad_value = || Error::Config(format!("bad value `{value}` for {family}.{key}"));
        let float = || value.trim().parse::<f64>().map_err(|_| bad_value());
        let count = || value.trim().parse::<usize>().map_err(|_| bad_value());
        let flag = || value.trim().parse::<bool>().map_err(|_| bad_value());
        let mut next = self.clone();
        match (&mut next, key) {
            (ModelSpec::LogisticRegression(p), "lambda") => p.lambda = float()?,
            (ModelSpec::LogisticRegression(p), "max_iter") => p.max_iter = count()?,
            (ModelSpec::LogisticRegression(p), "grad_tol") => p.grad_tol = float()?,
            (ModelSpec::LinearSvm(p), "c") => p.c = float()?,
            (ModelSpec::LinearSvm(p), "max_iter") => p.max_iter = count()?,
            (ModelSpec::LinearSvm(p), "tol") => p.tol = float()?,
            (ModelSpec::Knn(p), "k") => p.k = count()?,
            (ModelSpec::DecisionTree(p), "max_depth") => p.max_depth = count()?,
            (ModelSpec::DecisionTree(p), "min_leaf") => p.min_leaf = count()?,
            (ModelSpec::RandomForest(p), "n_trees") => p.n_trees = count()?,
            (ModelSpec::RandomForest(p), "max_depth") => p.max_depth = count()?,
            (ModelSpec::RandomForest(p), "min_leaf") => p.min_leaf = count()?,
            (ModelSpec::RandomForest(p), "max_features") => p.max_features = Some(count()?),
            (ModelSpec::RandomForest(p), "bootstrap") => p.bootstrap = flag()?,
            _ => return Err(Error::Config(format!("unknown hyperparameter `{key}` for {family}"))),
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("{}: {msg}", self.family())));
        match self {
            ModelSpec::LogisticRegression(p) => {
                if !(p.lambda >= 0.0) || p.max_iter == 0 || !(p.grad_tol > 0.0) {
                    return fail("need lambda >= 0, max_iter >= 1, grad_tol > 0");
                }
            }
            ModelSpec::LinearSvm(p) => {
                if !(p.c > 0.0) || p.max_iter == 0 || !(p.tol > 0.0) {
                    return fail("need c > 0, max_iter >= 1, tol > 0");
                }
            }
            ModelSpec::Knn(p) => {
                if p.k == 0 {
                    return fail("k must be at least 1");
                }
            }
            ModelSpec::DecisionTree(p) => {
                if p.max_depth == 0 || p.min_leaf == 0 {
                    return fail("max_depth and min_leaf must be at least 1");
                }
            }
            ModelSpec::RandomForest(p) => {
                if p.n_trees == 0 || p.max_depth == 0 || p.min_leaf == 0 || p.max_features == Some(0) {
                    return fail("n_trees, max_depth, min_leaf and max_features must be at least 1");
                }
            }
        }
        Ok(())
    }
}

/// Fitted state of one of the five families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    /// `probability = true` applies the logistic link to the margin.
    Linear { weights: Vec<f64>, intercept: f64, probability: bool },
    Neighbors { train: Matrix, labels: Vec<bool>, k: usize },
    Tree { root: TreeNode },
    Forest { trees: Vec<TreeNode> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScorer {
    pub family: ModelFamily,
    pub model: FittedModel,
    /// Feature indices (into the cohort schema) of the grid columns, in order.
    pub feature_subset: Vec<usize>,
}

impl TrainedScorer {
    /// Records which cohort features the grid columns were.
    pub fn with_feature_subset(mut self, subset: Vec<usize>) -> Result<Self> {
        if subset.len() != self.feature_subset.len() {
            return Err(Error::Interface(format!(
                "model fitted on {} columns, subset names {}",
                self.feature_subset.len(),
                subset.len()
            )));
        }
        self.feature_subset = subset;
        Ok(self)
    }

    /// One score per row of `x`; columns must match the fitted subset.
    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.feature_subset.len() {
            return Err(Error::Interface(format!(
                "grid has {} columns, model expects {}",
                x.cols(),
                self.feature_subset.len()
            )));
        }
        Ok((0..x.rows()).map(|i| self.score_row(x.row(i))).collect())
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Linear { weights, intercept, probability } => {
                let margin = intercept + crate::linalg::dot(weights, row);
                if *probability {
                    logistic::sigmoid(margin)
                } else {
                    margin
                }
            }
            FittedModel::Neighbors { train, labels, k } => knn_score(train, labels, *k, row),
            FittedModel::Tree { root } => root.predict(row),
            FittedModel::Forest { trees } => trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64,
        }
    }
}

/// Fits a model on a complete grid with binary labels.
pub fn fit(spec: &ModelSpec, x: &Matrix, y: &[bool], rng: &mut Stream) -> Result<TrainedScorer> {
    spec.validate()?;
    if x.rows() != y.len() {
        return Err(Error::Interface(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if !x.is_finite() {
        return Err(Error::Fit("non-finite value in training grid".into()));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Fit("training labels contain a single class".into()));
    }
    let model = match spec {
        ModelSpec::LogisticRegression(p) => {
            let f = fit_logistic(x, y, p);
            FittedModel::Linear { weights: f.weights, intercept: f.intercept, probability: true }
        }
        ModelSpec::LinearSvm(p) => {
            let f = fit_svm(x, y, p);
            FittedModel::Linear { weights: f.weights, intercept: f.intercept, probability: false }
        }
        ModelSpec::Knn(p) => FittedModel::Neighbors { train: x.clone(), labels: y.to_vec(), k: p.k },
        ModelSpec::DecisionTree(p) => {
            let rows: Vec<usize> = (0..x.rows()).collect();
            FittedModel::Tree { root: grow_tree(x, y, &rows, p, &mut FeatureSampler::All) }
        }
        ModelSpec::RandomForest(p) => FittedModel::Forest { trees: fit_forest(x, y, p, rng) },
    };
    Ok(TrainedScorer { family: spec.family(), model, feature_subset: (0..x.cols()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn separable() -> (Matrix, Vec<bool>) {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64 / 4.0 - 2.5]).collect::<Vec<_>>());
        let y = (0..20).map(|i| i >= 10).collect();
        (x, y)
    }

    #[test]
    fn every_family_fits_and_orders_separable_data() {
        let (x, y) = separable();
        for family in ModelFamily::ALL {
            let spec = ModelSpec::default_for(family);
            let m = fit(&spec, &x, &y, &mut stream(1, &[])).unwrap();
            let s = m.score(&x).unwrap();
            assert!(s.iter().all(|v| v.is_finite()), "{family}");
            let min_pos = (10..20).map(|i| s[i]).fold(f64::INFINITY, f64::min);
            let max_neg = (0..10).map(|i| s[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(min_pos >= max_neg, "{family}: {min_pos} < {max_neg}");
        }
    }

    #[test]
    fn single_class_is_a_fit_error() {
        let (x, _) = separable();
        let y = vec![true; 20];
        let err = fit(&ModelSpec::default_for(ModelFamily::Knn), &x, &y, &mut stream(0, &[])).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
    }

    #[test]
    fn non_finite_input_is_a_fit_error() {
        let (mut x, y) = separable();
        x.set(3, 0, f64::NAN);
        let err = fit(&ModelSpec::default_for(ModelFamily::LogisticRegression), &x, &y, &mut stream(0, &[])).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
    }

    #[test]
    fn zero_logistic_model_scores_one_half() {
        let m = TrainedScorer {
            family: ModelFamily::LogisticRegression,
            model: FittedModel::Linear { weights: vec![0.0, 0.0], intercept: 0.0, probability: true },
            feature_subset: vec![0, 1],
        };
        let s = m.score(&Matrix::from_rows(&[vec![3.0, -1.0], vec![0.0, 9.0]])).unwrap();
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_is_an_interface_error() {
        let m = TrainedScorer {
            family: ModelFamily::LogisticRegression,
            model: FittedModel::Linear { weights: vec![0.0], intercept: 0.0, probability: true },
            feature_subset: vec![4],
        };
        assert!(matches!(m.score(&Matrix::zeros(2, 2)), Err(Error::Interface(_))));
    }

    #[test]
    fn tree_and_forest_leaf_rules() {
        let leaf = |f: f64| TreeNode::Leaf { positive_fraction: f, n_train: 5 };
        let tree = TreeNode::Split { feature: 0, threshold: 0.0, left: Box::new(leaf(0.1)), right: Box::new(leaf(0.8)) };
        let single = TrainedScorer {
            family: ModelFamily::DecisionTree,
            model: FittedModel::Tree { root: tree },
            feature_subset: vec![0],
        };
        assert_eq!(single.score(&Matrix::from_rows(&[vec![1.0]])).unwrap(), vec![0.8]);

        let forest = TrainedScorer {
            family: ModelFamily::RandomForest,
            model: FittedModel::Forest { trees: vec![leaf(0.2), leaf(0.6)] },
            feature_subset: vec![0],
        };
        let s = forest.score(&Matrix::from_rows(&[vec![1.0]])).unwrap()[0];
        assert!((s - 0.4).abs() < 1e-15);
    }

    #[test]
    fn hyperparameters_validated() {
        let mut spec = ModelSpec::default_for(ModelFamily::Knn);
        assert!(spec.set_param("k", "0").is_err());
        spec.set_param("k", "7").unwrap();
        assert_eq!(spec, ModelSpec::Knn(KnnParams { k: 7 }));
        let mut tree = ModelSpec::default_for(ModelFamily::DecisionTree);
        assert!(tree.set_param("max_depth", "0").is_err());
        assert!(tree.set_param("k", "3").is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in ModelFamily::ALL {
            assert_eq!(ModelFamily::parse(f.name()).unwrap(), f);
        }
        assert!(ModelFamily::parse("gbm").is_err());
    }
}
