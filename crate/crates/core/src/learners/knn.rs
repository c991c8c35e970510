use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Fraction of positives among the `k` nearest training rows (Euclidean).
/// Equal distances are ordered by training index.
pub fn knn_score(train: &Matrix, labels: &[bool], k: usize, query: &[f64]) -> f64 {
    let mut dist: Vec<(f64, usize)> = (0..train.rows())
        .map(|i| {
            let d2: f64 = train.row(i).iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    let k = k.min(dist.len());
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_distance);
    }
    let positives = dist[..k].iter().filter(|&&(_, i)| labels[i]).count();
    positives as f64 / k as f64
}
