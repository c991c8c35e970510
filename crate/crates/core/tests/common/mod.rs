//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use credence::learners::TreeNode;
use credence::linalg::Matrix;

/// AUC by counting every (positive, negative) pair; ties count half.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice_correct: u64 = 0;
    let mut pairs: u64 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            twice_correct += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    twice_correct as f64 / (2 * pairs) as f64
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Two-sided Fisher p by exact integer enumeration: sums every table with
/// the observed margins whose hypergeometric weight does not exceed the
/// observed one.
pub fn fisher_oracle(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let weight = |x: u64| binomial(r1, x) * binomial(r2, c1 - x);
    let observed = weight(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let numerator: u128 = (lo..=hi).map(weight).filter(|&w| w <= observed).sum();
    numerator as f64 / binomial(n, c1) as f64
}

/// Central finite-difference gradient of `f` at `theta`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn gini_count(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    n as f64 * (1.0 - p * p - (1.0 - p) * (1.0 - p))
}

/// CART grown by enumerating every (feature, midpoint) split at each node
/// and counting both children directly. Ties go to the lower feature, then
/// the lower threshold; a split must lower impurity by more than 1e-12.
pub fn exhaustive_tree(x: &Matrix, y: &[bool], rows: &[usize], max_depth: usize, min_leaf: usize) -> TreeNode {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| y[r]).count();
    let leaf = TreeNode::Leaf { positive_fraction: if n == 0 { 0.0 } else { pos as f64 / n as f64 }, n_train: n };
    if max_depth == 0 || pos == 0 || pos == n {
        return leaf;
    }
    let parent = gini_count(pos, n);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let left: Vec<usize> = rows.iter().copied().filter(|&r| x.get(r, f) <= t).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&r| x.get(r, f) > t).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let count = |s: &[usize]| s.iter().filter(|&&r| y[r]).count();
            let imp = gini_count(count(&left), left.len()) + gini_count(count(&right), right.len());
            if imp >= parent - 1e-12 {
                continue;
            }
            if best.is_none_or(|(_, _, b)| imp < b - 1e-12) {
                best = Some((f, t, imp));
            }
        }
    }
    let Some((feature, threshold, _)) = best else {
        return leaf;
    };
    let left: Vec<usize> = rows.iter().copied().filter(|&r| x.get(r, feature) <= threshold).collect();
    let right: Vec<usize> = rows.iter().copied().filter(|&r| x.get(r, feature) > threshold).collect();
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(exhaustive_tree(x, y, &left, max_depth - 1, min_leaf)),
        right: Box::new(exhaustive_tree(x, y, &right, max_depth - 1, min_leaf)),
    }
}

/// Row-weighted mean leaf Gini of `tree` on `rows`, by routing each row.
pub fn tree_training_gini(tree: &TreeNode, x: &Matrix, y: &[bool], rows: &[usize]) -> f64 {
    fn walk(node: &TreeNode, x: &Matrix, y: &[bool], rows: &[usize], acc: &mut f64) {
        match node {
            TreeNode::Leaf { .. } => {
                let pos = rows.iter().filter(|&&r| y[r]).count();
                *acc += gini_count(pos, rows.len());
            }
            TreeNode::Split { feature, threshold, left, right } => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, *feature) <= *threshold);
                walk(left, x, y, &l, acc);
                walk(right, x, y, &r, acc);
            }
        }
    }
    let mut acc = 0.0;
    walk(tree, x, y, rows, &mut acc);
    acc / rows.len() as f64
}

/// Greedy forward selection re-derived step by step: re-score every
/// remaining candidate from scratch, take the best (lowest index on ties),
/// accept while the gain clears the gate.
pub fn selection_oracle(candidates: &[usize], score: impl Fn(&[usize]) -> f64, gate: f64, baseline: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut previous = baseline;
    let mut pool: Vec<usize> = candidates.to_vec();
    pool.sort_unstable();
    while !pool.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for &c in &pool {
            let mut set = chosen.clone();
            set.push(c);
            let s = score(&set);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        let (c, s) = best.unwrap();
        if s - previous < gate {
            break;
        }
        chosen.push(c);
        pool.retain(|&p| p != c);
        previous = s;
    }
    chosen
}

use credence::dataset::Cohort;
use credence::impute::ImputedCohort;

/// Copy of `cohort` with each observed value of `feature` deleted with
/// probability `rate`, independently of everything else.
pub fn mcar_delete(cohort: &Cohort, feature: usize, rate: f64, seed: u64) -> Cohort {
    use rand::Rng;
    let mut rng = credence::rng::stream(seed, &[0xDE1]);
    let mut rows = cohort.rows();
    for row in rows.iter_mut() {
        if rng.random::<f64>() < rate {
            row[feature] = None;
        }
    }
    Cohort::new(
        cohort.schema().clone(),
        rows,
        cohort.ybocs_baseline().to_vec(),
        cohort.ybocs_final().to_vec(),
    )
    .expect("deleting cells keeps the cohort valid")
}

/// Across-imputation pooled mean of one column and its total standard
/// error: within-imputation variance of the mean plus (1 + 1/M) times the
/// between-imputation variance.
pub fn pooled_mean(imputed: &[ImputedCohort], feature: usize) -> (f64, f64) {
    let m = imputed.len() as f64;
    let mut means = Vec::new();
    let mut within = 0.0;
    for imp in imputed {
        let col = imp.completed_values.column(feature);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        within += var / n;
        means.push(mean);
    }
    let q = means.iter().sum::<f64>() / m;
    let between = means.iter().map(|v| (v - q).powi(2)).sum::<f64>() / (m - 1.0);
    (q, (within / m + (1.0 + 1.0 / m) * between).sqrt())
}

/// Smallest across-imputation variance over the cells of `feature` that
/// were missing in `cohort`.
pub fn min_between_variance(cohort: &Cohort, imputed: &[ImputedCohort], feature: usize) -> f64 {
    let m = imputed.len() as f64;
    (0..cohort.n_patients())
        .filter(|&i| cohort.is_missing(i, feature))
        .map(|i| {
            let vals: Vec<f64> = imputed.iter().map(|imp| imp.completed_values.get(i, feature)).collect();
            let mean = vals.iter().sum::<f64>() / m;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = (pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Pearson chi-square statistic of a 2×2 table (no continuity correction).
pub fn chi_square_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return 0.0;
    }
    n * (a * d - b * c).powi(2) / denom
}
