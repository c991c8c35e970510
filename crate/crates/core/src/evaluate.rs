//! AUC and the imputation × fold evaluation grid.

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Outcome, Standardizer};
use crate::error::{Error, Result};
use crate::impute::ImputedCohort;
use crate::learners::{self, ModelSpec};
use crate::par;
use crate::rng::{self, TAG_FIT, TAG_FOLDS};

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Interface(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tied blocks; doubled so every rank is an integer
    let mut pos_rank_sum2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_midrank = (start + 1 + end) as u64;
        let pos_in_block = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        pos_rank_sum2 += doubled_midrank * pos_in_block;
        start = end;
    }
    let n_pos = n_pos as u64;
    // 2U = 2R - n_pos (n_pos + 1); count of correctly ordered pairs, halves doubled
    let u2 = pos_rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAuc {
    pub imputation: usize,
    pub fold: usize,
    /// `None` when the test fold held a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub features: Vec<usize>,
    pub per_run_auc: Vec<RunAuc>,
    pub pooled_auc: f64,
    /// Imputations × folds, including excluded runs.
    pub run_count: usize,
    pub excluded_runs: usize,
}

/// Cross-validated AUC of `spec` on `features`, pooled over every
/// (imputation, fold) run.
///
/// Folds are stratified on each imputation's completed outcome and drawn
/// from a stream keyed by `(seed, imputation)`, so every feature set is
/// compared on the same splits. Standardization is fit on the training
/// folds only. Each run's model stream is keyed by `(seed, imputation,
/// fold)`.
pub fn evaluate_feature_set(
    features: &[usize],
    spec: &ModelSpec,
    imputed: &[ImputedCohort],
    outcome: Outcome,
    k: usize,
    seed: u64,
) -> Result<EvaluationResult> {
    if features.is_empty() {
        return Err(Error::Config("cannot evaluate an empty feature set".into()));
    }
    if imputed.is_empty() {
        return Err(Error::Config("no imputed datasets to evaluate".into()));
    }
    let p = imputed[0].completed_values.cols();
    if let Some(&bad) = features.iter().find(|&&f| f >= p) {
        return Err(Error::Interface(format!("feature index {bad} out of range for {p} features")));
    }

    let folds = par::map_indexed(imputed.len(), |m| {
        let mut rng = rng::stream(seed, &[TAG_FOLDS, m as u64]);
        dataset::stratified_folds(imputed[m].outcome(outcome), k, &mut rng)
            .map_err(|e| e.at(format!("imputation {m}")))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let runs = par::map_indexed(imputed.len() * k, |task| {
        let (m, f) = (task / k, task % k);
        run_one(features, spec, &imputed[m], outcome, &folds[m], m, f, seed)
            .map_err(|e| e.at(format!("imputation {m}, fold {f}")))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let kept: Vec<f64> = runs.iter().filter_map(|r| r.auc).collect();
    if kept.is_empty() {
        return Err(Error::UndefinedMetric("every test fold held a single class".into()));
    }
    let pooled_auc = kept.iter().sum::<f64>() / kept.len() as f64;
    Ok(EvaluationResult {
        features: features.to_vec(),
        run_count: runs.len(),
        excluded_runs: runs.len() - kept.len(),
        per_run_auc: runs,
        pooled_auc,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    features: &[usize],
    spec: &ModelSpec,
    data: &ImputedCohort,
    outcome: Outcome,
    folds: &dataset::FoldAssignment,
    m: usize,
    f: usize,
    seed: u64,
) -> Result<RunAuc> {
    let (train, test) = folds.split(f);
    let labels = data.outcome(outcome);
    let y_train: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    let test_pos = y_test.iter().filter(|&&v| v).count();
    if test_pos == 0 || test_pos == y_test.len() {
        return Ok(RunAuc { imputation: m, fold: f, auc: None });
    }
    let kinds: Vec<_> = {
        let all = data.base.schema().kinds();
        features.iter().map(|&j| all[j]).collect()
    };
    let x_train = data.completed_values.select(&train, features);
    let x_test = data.completed_values.select(&test, features);
    let (scaler, _warnings) = Standardizer::fit(&x_train, &kinds)?;
    let mut rng = rng::stream(seed, &[TAG_FIT, m as u64, f as u64]);
    let model = learners::fit(spec, &scaler.apply(&x_train), &y_train, &mut rng)?;
    let scores = model.score(&scaler.apply(&x_test))?;
    Ok(RunAuc { imputation: m, fold: f, auc: Some(auc(&scores, &y_test)?) })
}
