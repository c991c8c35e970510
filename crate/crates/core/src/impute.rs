//! Multiple imputation by chained equations.
//!
//! Every feature column and both severity scores take part. Each target is
//! regressed on all other columns (current completed values) with a small
//! ridge term; imputations are posterior draws of the coefficients plus
//! Gaussian residual noise, rounded and clipped for discrete or bounded
//! columns. Outcomes are re-derived from the completed scores afterwards.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Cohort, FeatureKind, Outcome, BASELINE_COLUMN, FINAL_COLUMN, SCORE_BOUNDS};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::par;
use crate::rng::{self, Stream, TAG_IMPUTE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    /// Chained-equation sweeps per imputation.
    pub sweeps: usize,
    /// Ridge term added to the diagonal of every normal-equation system.
    pub ridge: f64,
    /// Predictors whose squared residual (on the standardized scale) after
    /// projecting on earlier predictors falls below this are dropped as
    /// collinear.
    pub collinearity_tol: f64,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        Self { sweeps: 10, ridge: 1e-6, collinearity_tol: 1e-4 }
    }
}

/// One completed copy of a cohort.
#[derive(Debug, Clone)]
pub struct ImputedCohort {
    pub base: Arc<Cohort>,
    pub imputation_index: usize,
    pub completed_values: Matrix,
    pub completed_baseline: Vec<f64>,
    pub completed_final: Vec<f64>,
    pub response: Vec<bool>,
    pub remission: Vec<bool>,
}

impl ImputedCohort {
    pub fn outcome(&self, outcome: Outcome) -> &[bool] {
        match outcome {
            Outcome::Response => &self.response,
            Outcome::Remission => &self.remission,
        }
    }

    /// Writes the completed data in the same CSV layout as the source.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows = (0..self.completed_values.rows())
            .map(|i| self.completed_values.row(i).iter().map(|&v| Some(v)).collect())
            .collect();
        let completed = Cohort::new(
            self.base.schema().clone(),
            rows,
            self.completed_baseline.iter().map(|&v| Some(v)).collect(),
            self.completed_final.iter().map(|&v| Some(v)).collect(),
        )?;
        dataset::write_csv(&completed, writer)
    }
}

struct Column {
    name: String,
    discrete: bool,
    bounds: Option<(f64, f64)>,
}

fn columns_of(cohort: &Cohort) -> Vec<Column> {
    let mut cols: Vec<Column> = cohort
        .schema()
        .features()
        .iter()
        .map(|f| Column { name: f.name.clone(), discrete: f.kind.is_discrete(), bounds: f.effective_bounds() })
        .collect();
    for name in [BASELINE_COLUMN, FINAL_COLUMN] {
        cols.push(Column { name: name.to_string(), discrete: true, bounds: Some(SCORE_BOUNDS) });
    }
    cols
}

/// Produces `m_count` completed cohorts. Imputation `m` draws from its own
/// stream derived from `(seed, m)`, so results do not depend on scheduling.
pub fn impute_many(cohort: &Cohort, m_count: usize, seed: u64, options: &ImputeOptions) -> Result<Vec<ImputedCohort>> {
    if m_count == 0 {
        return Err(Error::Config("imputation count must be at least 1".into()));
    }
    let base = Arc::new(cohort.clone());
    let cols = columns_of(cohort);
    let n = cohort.n_patients();
    let p = cohort.n_features();
    let q = cols.len();

    let mut data = vec![0.0; n * q];
    let mut missing = vec![false; n * q];
    for i in 0..n {
        for j in 0..q {
            let v = if j < p {
                cohort.value(i, j)
            } else if j == p {
                cohort.ybocs_baseline()[i]
            } else {
                cohort.ybocs_final()[i]
            };
            match v {
                Some(v) => data[i * q + j] = v,
                None => missing[i * q + j] = true,
            }
        }
    }
    for (j, col) in cols.iter().enumerate() {
        if n > 0 && (0..n).all(|i| missing[i * q + j]) {
            return Err(Error::Imputation(format!("column `{}` has no observed values", col.name)));
        }
    }
    let layout = Layout { n, q, cols: &cols, data: &data, missing: &missing };

    Ok(par::map_indexed(m_count, |m| {
        let mut rng = rng::stream(seed, &[TAG_IMPUTE, m as u64]);
        let completed = layout.complete(&mut rng, options);
        let mut values = Vec::with_capacity(n * p);
        let mut baseline = Vec::with_capacity(n);
        let mut final_scores = Vec::with_capacity(n);
        for i in 0..n {
            values.extend_from_slice(&completed[i * q..i * q + p]);
            baseline.push(completed[i * q + p]);
            final_scores.push(completed[i * q + p + 1]);
        }
        let response = baseline
            .iter()
            .zip(&final_scores)
            .map(|(&b, &f)| dataset::response_from_scores(b, f).unwrap_or(false))
            .collect();
        let remission = final_scores.iter().map(|&f| dataset::remission_from_score(f)).collect();
        ImputedCohort {
            base: Arc::clone(&base),
            imputation_index: m,
            completed_values: Matrix::from_vec(n, p, values),
            completed_baseline: baseline,
            completed_final: final_scores,
            response,
            remission,
        }
    }))
}

struct Layout<'a> {
    n: usize,
    q: usize,
    cols: &'a [Column],
    data: &'a [f64],
    missing: &'a [bool],
}

impl Layout<'_> {
    fn complete(&self, rng: &mut Stream, options: &ImputeOptions) -> Vec<f64> {
        let (n, q) = (self.n, self.q);
        let mut work = self.data.to_vec();
        let targets: Vec<usize> = (0..q).filter(|&j| (0..n).any(|i| self.missing[i * q + j])).collect();
        if targets.is_empty() {
            return work;
        }
        // start from random draws of observed values
        for &j in &targets {
            let observed: Vec<f64> = (0..n).filter(|&i| !self.missing[i * q + j]).map(|i| self.data[i * q + j]).collect();
            for i in 0..n {
                if self.missing[i * q + j] {
                    work[i * q + j] = observed[rng.random_range(0..observed.len())];
                }
            }
        }
        for _ in 0..options.sweeps {
            for &j in &targets {
                let obs_rows: Vec<usize> = (0..n).filter(|&i| !self.missing[i * q + j]).collect();
                let mis_rows: Vec<usize> = (0..n).filter(|&i| self.missing[i * q + j]).collect();
                let predictors: Vec<usize> = (0..q).filter(|&k| k != j).collect();
                let model = DrawModel::fit(&work, q, j, &obs_rows, &predictors, options, rng);
                for &i in &mis_rows {
                    let raw = model.draw(&work[i * q..(i + 1) * q], rng);
                    work[i * q + j] = self.cols[j].finish(raw);
                }
            }
        }
        work
    }
}

impl Column {
    fn finish(&self, v: f64) -> f64 {
        let mut v = if self.discrete { v.round() } else { v };
        if let Some((lo, hi)) = self.bounds {
            v = v.clamp(lo, hi);
        }
        v
    }
}

/// A posterior draw of a linear conditional model, ready to sample
/// imputations. Predictors are centered and scaled by their observed-row
/// moments; `coef` applies on that scale.
struct DrawModel {
    intercept: f64,
    predictors: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    coef: Vec<f64>,
    sigma: f64,
}

impl DrawModel {
    fn fit(
        work: &[f64],
        q: usize,
        target: usize,
        obs_rows: &[usize],
        candidates: &[usize],
        options: &ImputeOptions,
        rng: &mut Stream,
    ) -> DrawModel {
        let n_obs = obs_rows.len();
        let y: Vec<f64> = obs_rows.iter().map(|&i| work[i * q + target]).collect();
        let y_mean = y.iter().sum::<f64>() / n_obs as f64;

        if n_obs >= 3 {
            if let Some(model) = Self::fit_regression(work, q, obs_rows, &y, y_mean, candidates, options, rng) {
                return model;
            }
        }
        // intercept-only fallback
        let ss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
        let sigma = if n_obs >= 2 { (ss / (n_obs - 1) as f64).sqrt() } else { 0.0 };
        let z: f64 = rng.sample(StandardNormal);
        DrawModel {
            intercept: y_mean + sigma / (n_obs as f64).sqrt() * z,
            predictors: Vec::new(),
            center: Vec::new(),
            scale: Vec::new(),
            coef: Vec::new(),
            sigma,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_regression(
        work: &[f64],
        q: usize,
        obs_rows: &[usize],
        y: &[f64],
        y_mean: f64,
        candidates: &[usize],
        options: &ImputeOptions,
        rng: &mut Stream,
    ) -> Option<DrawModel> {
        let n_obs = obs_rows.len();
        let nf = n_obs as f64;

        // standardized candidate columns; constant ones drop out
        let mut kept: Vec<usize> = Vec::new();
        let mut center = Vec::new();
        let mut scale = Vec::new();
        let mut z_cols: Vec<Vec<f64>> = Vec::new();
        // Gram-Schmidt style factor of the correlation matrix, grown one
        // predictor at a time so collinear ones are skipped
        let mut chol_rows: Vec<Vec<f64>> = Vec::new();
        for &k in candidates {
            let col: Vec<f64> = obs_rows.iter().map(|&i| work[i * q + k]).collect();
            let mean = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
            if var <= 1e-12 * (1.0 + mean * mean) {
                continue;
            }
            let sd = var.sqrt();
            let z: Vec<f64> = col.iter().map(|v| (v - mean) / sd).collect();
            let cross: Vec<f64> = z_cols.iter().map(|zc| linalg::dot(zc, &z) / nf).collect();
            let mut row = Vec::with_capacity(kept.len() + 1);
            for (a, lrow) in chol_rows.iter().enumerate() {
                let s: f64 = cross[a] - (0..a).map(|b| lrow[b] * row[b]).sum::<f64>();
                row.push(s / lrow[a]);
            }
            let pivot = 1.0 - row.iter().map(|v| v * v).sum::<f64>();
            if pivot < options.collinearity_tol {
                continue;
            }
            row.push(pivot.sqrt());
            chol_rows.push(row);
            kept.push(k);
            center.push(mean);
            scale.push(sd);
            z_cols.push(z);
        }
        let d = kept.len();
        if n_obs < d + 2 {
            return None;
        }

        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut gram = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        for a in 0..d {
            rhs[a] = linalg::dot(&z_cols[a], &yc);
            for b in 0..=a {
                let g = linalg::dot(&z_cols[a], &z_cols[b]);
                gram[a * d + b] = g;
                gram[b * d + a] = g;
            }
            gram[a * d + a] += options.ridge;
        }
        let l = linalg::cholesky(&gram, d)?;
        let beta = linalg::cholesky_solve(&l, d, &rhs);
        let rss: f64 = (0..n_obs)
            .map(|r| {
                let fit: f64 = (0..d).map(|a| beta[a] * z_cols[a][r]).sum();
                (yc[r] - fit).powi(2)
            })
            .sum();
        let sigma = (rss / (n_obs - d - 1) as f64).sqrt();

        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let shift = linalg::lower_transpose_solve(&l, d, &z);
        let coef: Vec<f64> = beta.iter().zip(&shift).map(|(b, s)| b + sigma * s).collect();
        let z0: f64 = rng.sample(StandardNormal);
        if !coef.iter().all(|c| c.is_finite()) || !sigma.is_finite() {
            return None;
        }
        Some(DrawModel {
            intercept: y_mean + sigma / nf.sqrt() * z0,
            predictors: kept,
            center,
            scale,
            coef,
            sigma,
        })
    }

    fn draw(&self, row: &[f64], rng: &mut Stream) -> f64 {
        let mut v = self.intercept;
        for (a, &k) in self.predictors.iter().enumerate() {
            v += self.coef[a] * (row[k] - self.center[a]) / self.scale[a];
        }
        let e: f64 = rng.sample(StandardNormal);
        v + self.sigma * e
    }
}

/// Kinds of the feature columns, for standardization of completed grids.
pub fn feature_kinds(imputed: &ImputedCohort) -> Vec<FeatureKind> {
    imputed.base.schema().kinds()
}
