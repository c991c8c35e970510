use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// L2 penalty on the weights (the intercept is not penalized).
    pub lambda: f64,
    pub max_iter: usize,
    /// Converged once every gradient component is below this.
    pub grad_tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { lambda: 1e-4, max_iter: 100, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Penalized objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood
/// `Σ [ln(1 + e^{z_i}) − y_i z_i] + λ/2 ‖w‖²` with `z_i = b + w·x_i`.
pub fn logistic_objective(x: &Matrix, y: &[bool], weights: &[f64], intercept: f64, lambda: f64) -> f64 {
    let nll: f64 = (0..x.rows())
        .map(|i| {
            let z = intercept + linalg::dot(weights, x.row(i));
            softplus(z) - if y[i] { z } else { 0.0 }
        })
        .sum();
    nll + 0.5 * lambda * linalg::dot(weights, weights)
}

/// Analytic gradient of [`logistic_objective`]: `(∂/∂w, ∂/∂b)`.
pub fn logistic_gradient(x: &Matrix, y: &[bool], weights: &[f64], intercept: f64, lambda: f64) -> (Vec<f64>, f64) {
    let mut gw: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    let mut gb = 0.0;
    for i in 0..x.rows() {
        let row = x.row(i);
        let r = sigmoid(intercept + linalg::dot(weights, row)) - if y[i] { 1.0 } else { 0.0 };
        gb += r;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    (gw, gb)
}

/// Damped Newton iterations with backtracking line search.
pub fn fit_logistic(x: &Matrix, y: &[bool], params: &LogisticParams) -> LogisticFit {
    let p = x.cols();
    let d = p + 1;
    let lambda = params.lambda;
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut f = logistic_objective(x, y, &w, b, lambda);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        let (gw, gb) = logistic_gradient(x, y, &w, b, lambda);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax < params.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Hessian over (w, b), intercept last
        let mut h = vec![0.0; d * d];
        for i in 0..x.rows() {
            let row = x.row(i);
            let s = sigmoid(b + linalg::dot(&w, row));
            let weight = s * (1.0 - s);
            for a in 0..d {
                let xa = if a < p { row[a] } else { 1.0 };
                for c in 0..=a {
                    let xc = if c < p { row[c] } else { 1.0 };
                    h[a * d + c] += weight * xa * xc;
                }
            }
        }
        for a in 0..d {
            if a < p {
                h[a * d + a] += lambda;
            }
            for c in 0..a {
                h[c * d + a] = h[a * d + c];
            }
        }
        let mut g = gw.clone();
        g.push(gb);
        let Some(l) = linalg::cholesky_jittered(&h, d) else { break };
        let step: Vec<f64> = linalg::cholesky_solve(&l, d, &g).into_iter().map(|v| -v).collect();
        let slope = linalg::dot(&g, &step);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_try: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi + t * si).collect();
            let b_try = b + t * step[p];
            let f_try = logistic_objective(x, y, &w_try, b_try, lambda);
            if f_try <= f + 1e-4 * t * slope {
                w = w_try;
                b = b_try;
                f = f_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
    }
    if !converged {
        let (gw, gb) = logistic_gradient(x, y, &w, b, lambda);
        converged = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs())) < params.grad_tol;
    }
    LogisticFit { weights: w, intercept: b, objective_trace: trace, iterations, converged }
}
