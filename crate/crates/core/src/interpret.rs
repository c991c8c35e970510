//! Threshold extraction from fitted trees and 2×2 contingency statistics
//! for the groups the thresholds define.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Cohort, Outcome};
use crate::learners::TreeNode;

/// Cutpoints closer than this are the same cutpoint.
pub const CUTPOINT_DEDUP_TOL: f64 = 1e-9;

/// Split thresholds on `feature`, root to leaf depth first, deduplicated.
pub fn extract_thresholds(tree: &TreeNode, feature: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for (f, t) in tree.splits() {
        if f == feature && !out.iter().any(|c| (c - t).abs() <= CUTPOINT_DEDUP_TOL) {
            out.push(t);
        }
    }
    out
}

/// The integer `v` such that, on an integer scale, `x <= cutpoint` is
/// `x <= v`.
pub fn integer_form(cutpoint: f64) -> i64 {
    cutpoint.floor() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

impl Direction {
    pub fn holds(self, value: f64, cutpoint: f64) -> bool {
        match self {
            Direction::AtMost => value <= cutpoint,
            Direction::Above => value > cutpoint,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Direction::AtMost => "<=",
            Direction::Above => ">",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Exposure (threshold predicate) by outcome counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub exposed_pos: u64,
    pub exposed_neg: u64,
    pub unexposed_pos: u64,
    pub unexposed_neg: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { exposed_pos: a, exposed_neg: b, unexposed_pos: c, unexposed_neg: d }
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.exposed_pos, self.exposed_neg, self.unexposed_pos, self.unexposed_neg]
    }

    pub fn total(&self) -> u64 {
        self.cells().iter().sum()
    }

    /// Every patient falls on one side of the threshold.
    pub fn is_degenerate(&self) -> bool {
        self.exposed_pos + self.exposed_neg == 0 || self.unexposed_pos + self.unexposed_neg == 0
    }

    pub fn rows_swapped(&self) -> Self {
        Self::new(self.unexposed_pos, self.unexposed_neg, self.exposed_pos, self.exposed_neg)
    }

    pub fn columns_swapped(&self) -> Self {
        Self::new(self.exposed_neg, self.exposed_pos, self.unexposed_neg, self.unexposed_pos)
    }
}

/// Tabulates `(value, outcome)` pairs against `value <direction> cutpoint`.
pub fn contingency<I>(pairs: I, cutpoint: f64, direction: Direction) -> ContingencyTable
where
    I: IntoIterator<Item = (f64, bool)>,
{
    let mut t = ContingencyTable::new(0, 0, 0, 0);
    for (v, y) in pairs {
        match (direction.holds(v, cutpoint), y) {
            (true, true) => t.exposed_pos += 1,
            (true, false) => t.exposed_neg += 1,
            (false, true) => t.unexposed_pos += 1,
            (false, false) => t.unexposed_neg += 1,
        }
    }
    t
}

/// Contingency table over patients whose feature value and outcome are both
/// observed.
pub fn cohort_contingency(
    cohort: &Cohort,
    feature: usize,
    cutpoint: f64,
    direction: Direction,
    outcome: Outcome,
) -> ContingencyTable {
    let labels = cohort.outcome(outcome);
    let pairs = (0..cohort.n_patients()).filter_map(|i| Some((cohort.value(i, feature)?, labels[i]?)));
    contingency(pairs, cutpoint, direction)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    /// `+inf` when `infinite` is set.
    pub value: f64,
    pub infinite: bool,
    /// Haldane–Anscombe: 0.5 added to every cell because one was zero.
    pub correction_applied: bool,
}

/// `ad / bc`, with 0.5 added to every cell when any cell is zero.
pub fn odds_ratio(table: &ContingencyTable) -> OddsRatio {
    let correction_applied = table.cells().contains(&0);
    let shift = if correction_applied { 0.5 } else { 0.0 };
    let [a, b, c, d] = table.cells().map(|v| v as f64 + shift);
    let denom = b * c;
    if denom == 0.0 {
        return OddsRatio { value: f64::INFINITY, infinite: true, correction_applied };
    }
    OddsRatio { value: a * d / denom, infinite: false, correction_applied }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

/// Two-sided Fisher exact test: the total hypergeometric probability of
/// tables with the observed margins that are no more likely than the
/// observed one (relative tolerance 1e-12).
pub fn fisher_exact_p(table: &ContingencyTable) -> f64 {
    let [a, b, c, d] = table.cells().map(|v| v as usize);
    let n = a + b + c + d;
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let lf = ln_factorials(n);
    let ln_p = |x: usize| {
        lf[row1] + lf[row2] + lf[col1] + lf[n - col1] - lf[n] - lf[x] - lf[row1 - x] - lf[col1 - x] - lf[row2 + x - col1]
    };
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let observed = ln_p(a);
    let cutoff = observed + 1e-12f64.ln_1p();
    let p: f64 = (lo..=hi).map(ln_p).filter(|&l| l <= cutoff).map(f64::exp).sum();
    p.min(1.0)
}

/// One threshold group against an outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub feature: String,
    pub cutpoint: f64,
    pub integer_form: i64,
    pub direction: Direction,
    pub outcome: Outcome,
    /// Fraction of per-imputation trees containing this cutpoint (±1).
    pub frequency: f64,
    pub table: ContingencyTable,
    pub degenerate: bool,
    pub odds_ratio: f64,
    pub odds_ratio_infinite: bool,
    pub correction_applied: bool,
    pub p_value: f64,
}

impl ThresholdReport {
    pub fn build(
        feature: &str,
        cutpoint: f64,
        direction: Direction,
        outcome: Outcome,
        frequency: f64,
        table: ContingencyTable,
    ) -> Self {
        let or = odds_ratio(&table);
        ThresholdReport {
            feature: feature.to_string(),
            cutpoint,
            integer_form: integer_form(cutpoint),
            direction,
            outcome,
            frequency,
            degenerate: table.is_degenerate(),
            odds_ratio: or.value,
            odds_ratio_infinite: or.infinite,
            correction_applied: or.correction_applied,
            p_value: fisher_exact_p(&table),
            table,
        }
    }
}

/// An integer cutpoint and the share of trees that contain it (±1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedCutpoint {
    pub value: i64,
    pub frequency: f64,
}

/// Pools integer cutpoints from many trees.
///
/// Values are visited by how many trees contain them exactly (most first,
/// ties to the lower value). A value is kept when at least `min_frequency`
/// of trees have a cutpoint within ±1 of it; values within ±1 of a visited
/// value are then skipped. Output is sorted by value.
pub fn aggregate_cutpoints(per_tree: &[Vec<i64>], min_frequency: f64) -> Vec<AggregatedCutpoint> {
    use std::collections::BTreeMap;
    if per_tree.is_empty() {
        return Vec::new();
    }
    let mut exact: BTreeMap<i64, usize> = BTreeMap::new();
    for cuts in per_tree {
        let mut uniq = cuts.clone();
        uniq.sort_unstable();
        uniq.dedup();
        for v in uniq {
            *exact.entry(v).or_default() += 1;
        }
    }
    let mut order: Vec<(i64, usize)> = exact.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let trees = per_tree.len() as f64;
    let mut visited: Vec<i64> = Vec::new();
    let mut out = Vec::new();
    for (v, _) in order {
        if visited.iter().any(|u| (u - v).abs() <= 1) {
            continue;
        }
        visited.push(v);
        let support = per_tree.iter().filter(|cuts| cuts.iter().any(|c| (c - v).abs() <= 1)).count();
        let frequency = support as f64 / trees;
        if frequency >= min_frequency {
            out.push(AggregatedCutpoint { value: v, frequency });
        }
    }
    out.sort_by_key(|c| c.value);
    out
}

/// A tree with feature names in place of indices, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NamedTree {
    Split { feature: String, threshold: f64, left: Box<NamedTree>, right: Box<NamedTree> },
    Leaf { positive_fraction: f64, n_train: usize },
}

impl NamedTree {
    pub fn from_tree(tree: &TreeNode, names: &[String]) -> Self {
        match tree {
            TreeNode::Split { feature, threshold, left, right } => NamedTree::Split {
                feature: names[*feature].clone(),
                threshold: *threshold,
                left: Box::new(Self::from_tree(left, names)),
                right: Box::new(Self::from_tree(right, names)),
            },
            TreeNode::Leaf { positive_fraction, n_train } => {
                NamedTree::Leaf { positive_fraction: *positive_fraction, n_train: *n_train }
            }
        }
    }

    /// Indented plain-text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            NamedTree::Split { feature, threshold, left, right } => {
                out.push_str(&format!("{pad}{feature} <= {threshold}\n"));
                left.render_into(out, depth + 1);
                out.push_str(&format!("{pad}{feature} > {threshold}\n"));
                right.render_into(out, depth + 1);
            }
            NamedTree::Leaf { positive_fraction, n_train } => {
                out.push_str(&format!("{pad}-> positive {positive_fraction:.3} (n = {n_train})\n"));
            }
        }
    }
}
