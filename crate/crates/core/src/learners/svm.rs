use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Hinge-loss weight.
    pub c: f64,
    /// Maximum passes over the training set.
    pub max_iter: usize,
    /// Stop once the duality gap falls below `tol * max(1, primal)`.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, max_iter: 1000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub primal: f64,
    pub dual: f64,
    pub passes: usize,
}

/// Linear SVM, `½‖w‖² + C Σ max(0, 1 − y_i (w·x_i + b))`, solved by dual
/// coordinate descent over the samples in index order.
///
/// The bias is folded into the weight vector through a constant feature, so
/// it is regularized together with the weights.
pub fn fit_svm(x: &Matrix, y: &[bool], params: &SvmParams) -> SvmFit {
    let n = x.rows();
    let p = x.cols();
    let c = params.c;
    let sign = |i: usize| if y[i] { 1.0 } else { -1.0 };
    // augmented weights: w[..p] features, w[p] bias
    let mut w = vec![0.0; p + 1];
    let mut alpha = vec![0.0; n];
    let q_diag: Vec<f64> = (0..n).map(|i| linalg::dot(x.row(i), x.row(i)) + 1.0).collect();
    let margin = |w: &[f64], i: usize| linalg::dot(&w[..p], x.row(i)) + w[p];

    let mut passes = 0;
    let (mut primal, mut dual) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..params.max_iter {
        passes += 1;
        for i in 0..n {
            let yi = sign(i);
            let g = yi * margin(&w, i) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * yi;
                if delta != 0.0 {
                    for (wj, xj) in w[..p].iter_mut().zip(x.row(i)) {
                        *wj += delta * xj;
                    }
                    w[p] += delta;
                }
            }
        }
        let norm2 = linalg::dot(&w, &w);
        let hinge: f64 = (0..n).map(|i| (1.0 - sign(i) * margin(&w, i)).max(0.0)).sum();
        primal = 0.5 * norm2 + c * hinge;
        dual = alpha.iter().sum::<f64>() - 0.5 * norm2;
        if primal - dual <= params.tol * primal.max(1.0) {
            break;
        }
    }
    let intercept = w[p];
    w.truncate(p);
    SvmFit { weights: w, intercept, primal, dual, passes }
}
