//! Greedy forward feature selection under a minimum pooled-AUC gain.

use serde::{Deserialize, Serialize};

use crate::dataset::Outcome;
use crate::error::{Error, Result};
use crate::evaluate::evaluate_feature_set;
use crate::impute::ImputedCohort;
use crate::learners::ModelSpec;
use crate::par;

/// Anything that can pool an AUC for a feature set.
pub trait SubsetEvaluator: Sync {
    fn pooled_auc(&self, features: &[usize]) -> Result<f64>;
}

/// Pools AUC over the full imputation × fold grid.
pub struct GridEvaluator<'a> {
    pub spec: &'a ModelSpec,
    pub imputed: &'a [ImputedCohort],
    pub outcome: Outcome,
    pub k_folds: usize,
    pub seed: u64,
}

impl SubsetEvaluator for GridEvaluator<'_> {
    fn pooled_auc(&self, features: &[usize]) -> Result<f64> {
        evaluate_feature_set(features, self.spec, self.imputed, self.outcome, self.k_folds, self.seed)
            .map(|r| r.pooled_auc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Minimum gain in pooled AUC for a feature to be accepted.
    pub gate: f64,
    /// The AUC the first feature must improve on.
    pub baseline_auc: f64,
    /// Stop after this many accepted features.
    pub max_features: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { gate: 0.05, baseline_auc: 0.5, max_features: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub feature: usize,
    pub pooled_auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub feature: usize,
    pub pooled_auc_after: f64,
}

/// One round of the greedy loop: every remaining candidate's pooled AUC
/// when appended to the current set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub previous_auc: f64,
    pub candidates: Vec<CandidateScore>,
    pub best: CandidateScore,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    /// Candidates scored in the round that ended selection by rejection;
    /// empty when the candidates ran out.
    pub rejected_at_final_step: Vec<CandidateScore>,
    pub gate: f64,
    pub baseline_auc: f64,
    pub rounds: Vec<RoundRecord>,
}

impl SelectionTrace {
    pub fn selected(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.feature).collect()
    }

    /// Final pooled AUC, or the baseline when nothing was selected.
    pub fn final_auc(&self) -> f64 {
        self.steps.last().map_or(self.baseline_auc, |s| s.pooled_auc_after)
    }

    /// True when each accepted step beats its predecessor by at least the
    /// gate and no feature repeats.
    pub fn satisfies_gate(&self) -> bool {
        let mut prev = self.baseline_auc;
        let mut seen = std::collections::HashSet::new();
        for s in &self.steps {
            if !(gain(s.pooled_auc_after, prev) >= self.gate) || !seen.insert(s.feature) {
                return false;
            }
            prev = s.pooled_auc_after;
        }
        true
    }
}

// shared by the accept rule and the trace check, so both agree bit for bit
fn gain(after: f64, before: f64) -> f64 {
    after - before
}

/// Adds, one at a time, the candidate that maximizes pooled AUC (ties to the
/// lower feature index) while the gain over the previous AUC is at least
/// `config.gate`. Stops at the first rejection or when candidates run out.
pub fn forward_select<E: SubsetEvaluator>(
    candidates: &[usize],
    evaluator: &E,
    config: &SelectionConfig,
) -> Result<SelectionTrace> {
    if candidates.is_empty() {
        return Err(Error::Config("forward selection needs at least one candidate".into()));
    }
    if !(config.gate >= 0.0) {
        return Err(Error::Config(format!("AUC gate must be non-negative, got {}", config.gate)));
    }
    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let mut selected: Vec<usize> = Vec::new();
    let mut trace = SelectionTrace {
        steps: Vec::new(),
        rejected_at_final_step: Vec::new(),
        gate: config.gate,
        baseline_auc: config.baseline_auc,
        rounds: Vec::new(),
    };
    let mut previous = config.baseline_auc;

    let cap = config.max_features.unwrap_or(usize::MAX);
    while !remaining.is_empty() && trace.steps.len() < cap {
        let scored = par::map_indexed(remaining.len(), |c| {
            let mut set = selected.clone();
            set.push(remaining[c]);
            evaluator.pooled_auc(&set).map(|auc| CandidateScore { feature: remaining[c], pooled_auc: auc })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let mut best = scored[0];
        for s in &scored[1..] {
            if s.pooled_auc > best.pooled_auc {
                best = *s;
            }
        }
        let accepted = gain(best.pooled_auc, previous) >= config.gate;
        trace.rounds.push(RoundRecord { previous_auc: previous, candidates: scored.clone(), best, accepted });
        if !accepted {
            trace.rejected_at_final_step = scored;
            break;
        }
        trace.steps.push(SelectionStep { feature: best.feature, pooled_auc_after: best.pooled_auc });
        selected.push(best.feature);
        remaining.retain(|&f| f != best.feature);
        previous = best.pooled_auc;
    }
    Ok(trace)
}
