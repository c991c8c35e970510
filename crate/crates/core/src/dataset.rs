//! Cohort schema, CSV ingestion, outcome derivation, standardization and
//! stratified fold assignment.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Stream;

/// Minimum fractional reduction in severity that counts as a response.
pub const RESPONSE_REDUCTION: f64 = 0.30;
/// Highest final severity score that counts as remission.
pub const REMISSION_MAX_FINAL: f64 = 16.0;
/// Instrument range of the severity score.
pub const SCORE_BOUNDS: (f64, f64) = (0.0, 48.0);

pub const BASELINE_COLUMN: &str = "ybocs_baseline";
pub const FINAL_COLUMN: &str = "ybocs_final";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
    Ordinal,
}

impl FeatureKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "continuous" => Ok(Self::Continuous),
            "binary" => Ok(Self::Binary),
            "ordinal" => Ok(Self::Ordinal),
            other => Err(Error::Config(format!("unknown feature kind `{other}`"))),
        }
    }

    /// Imputed values of this kind are rounded to integers.
    pub fn is_discrete(self) -> bool {
        !matches!(self, Self::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    pub bounds: Option<(f64, f64)>,
}

impl Feature {
    pub fn new(name: &str, kind: FeatureKind, bounds: Option<(f64, f64)>) -> Self {
        Self { name: name.to_string(), kind, bounds }
    }

    /// Effective closed interval for observed and imputed values. Binary
    /// features are always `[0, 1]`.
    pub fn effective_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Binary => Some((0.0, 1.0)),
            _ => self.bounds,
        }
    }

    /// Parses `name:kind` or `name:kind:lower:upper`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
        let bad = || Error::Config(format!("bad feature spec `{spec}`, expected name:kind[:lo:hi]"));
        match parts.as_slice() {
            [name, kind] => Ok(Self::new(name, FeatureKind::parse(kind)?, None)),
            [name, kind, lo, hi] => {
                let lo: f64 = lo.parse().map_err(|_| bad())?;
                let hi: f64 = hi.parse().map_err(|_| bad())?;
                Ok(Self::new(name, FeatureKind::parse(kind)?, Some((lo, hi))))
            }
            _ => Err(bad()),
        }
    }
}

/// Ordered list of candidate predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            if f.name.is_empty() {
                return Err(Error::Schema(format!("feature {i} has an empty name")));
            }
            if f.name == BASELINE_COLUMN || f.name == FINAL_COLUMN {
                return Err(Error::Schema(format!("feature name `{}` is reserved", f.name)));
            }
            if seen.insert(f.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if let Some((lo, hi)) = f.bounds {
                if !(lo < hi) {
                    return Err(Error::Schema(format!(
                        "feature `{}` has bounds [{lo}, {hi}] with lower >= upper",
                        f.name
                    )));
                }
            }
        }
        Ok(Self { features })
    }

    /// The seventeen default candidate predictors. The last slot is a
    /// placeholder that configuration may rename or retype.
    pub fn default_schema() -> Self {
        use FeatureKind::*;
        let f = Feature::new;
        Self::new(vec![
            f("age", Continuous, Some((0.0, 120.0))),
            f("gender_identity", Binary, None),
            f("sexual_minority", Binary, None),
            f("race_ethnicity", Binary, None),
            f("postgrad_education", Binary, None),
            f("bdd_ybocs_baseline", Ordinal, Some(SCORE_BOUNDS)),
            f("urica", Continuous, None),
            f("babs_tot_recalc", Ordinal, Some((0.0, 24.0))),
            f("qids", Ordinal, Some((0.0, 27.0))),
            f("credibility", Ordinal, Some((3.0, 27.0))),
            f("expectancy", Ordinal, Some((3.0, 27.0))),
            f("bdd_duration", Continuous, Some((0.0, 100.0))),
            f("treatment_group", Binary, None),
            f("ssri_use", Binary, None),
            f("any_comorbidity", Binary, None),
            f("covid_impact", Ordinal, Some((1.0, 5.0))),
            f("extra_predictor", Continuous, None),
        ])
        .expect("default schema is valid")
    }

    /// Replaces the last (configurable) slot.
    pub fn with_extra_slot(mut self, feature: Feature) -> Result<Self> {
        self.features.pop();
        self.features.push(feature);
        Self::new(self.features)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Response,
    Remission,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Response, Outcome::Remission];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Response => "response",
            Outcome::Remission => "remission",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "response" => Ok(Outcome::Response),
            "remission" => Ok(Outcome::Remission),
            other => Err(Error::Config(format!("unknown outcome `{other}`"))),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Response from a pair of observed scores. `None` when the baseline is not
/// positive.
pub fn response_from_scores(baseline: f64, final_score: f64) -> Option<bool> {
    (baseline > 0.0).then(|| (baseline - final_score) / baseline >= RESPONSE_REDUCTION)
}

pub fn remission_from_score(final_score: f64) -> bool {
    final_score <= REMISSION_MAX_FINAL
}

/// A patient whose outcomes could not be derived from observed scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeIssue {
    pub patient: usize,
    pub message: String,
}

/// Patients × features grid with an explicit missingness mask, plus the two
/// severity scores and the outcomes derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: FeatureSchema,
    n_patients: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
    ybocs_baseline: Vec<Option<f64>>,
    ybocs_final: Vec<Option<f64>>,
    response: Vec<Option<bool>>,
    remission: Vec<Option<bool>>,
    outcome_issues: Vec<OutcomeIssue>,
}

impl Cohort {
    /// Builds a cohort from per-patient rows (`None` = missing), checks
    /// bounds and derives outcomes.
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<Option<f64>>>,
        ybocs_baseline: Vec<Option<f64>>,
        ybocs_final: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = rows.len();
        let p = schema.len();
        if ybocs_baseline.len() != n || ybocs_final.len() != n {
            return Err(Error::Schema("score columns do not match patient count".into()));
        }
        let mut values = Vec::with_capacity(n * p);
        let mut missing = Vec::with_capacity(n * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Schema(format!("row {i} has {} values, expected {p}", row.len())));
            }
            for (j, cell) in row.iter().enumerate() {
                match *cell {
                    Some(v) => {
                        check_value(schema.feature(j), v, i)?;
                        values.push(v);
                        missing.push(false);
                    }
                    None => {
                        values.push(f64::NAN);
                        missing.push(true);
                    }
                }
            }
        }
        for (i, (b, f)) in ybocs_baseline.iter().zip(&ybocs_final).enumerate() {
            for (col, v) in [(BASELINE_COLUMN, b), (FINAL_COLUMN, f)] {
                if let Some(v) = *v {
                    check_score(col, v, i)?;
                }
            }
        }
        let cohort = Cohort {
            schema,
            n_patients: n,
            values,
            missing,
            ybocs_baseline,
            ybocs_final,
            response: vec![None; n],
            remission: vec![None; n],
            outcome_issues: Vec::new(),
        };
        Ok(derive_outcomes(&cohort))
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_patients(&self) -> usize {
        self.n_patients
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Observed value, or `None` where missing.
    pub fn value(&self, patient: usize, feature: usize) -> Option<f64> {
        let k = patient * self.n_features() + feature;
        (!self.missing[k]).then(|| self.values[k])
    }

    pub fn is_missing(&self, patient: usize, feature: usize) -> bool {
        self.missing[patient * self.n_features() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<Option<f64>> {
        (0..self.n_patients).map(|i| self.value(i, feature)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
            + self.ybocs_baseline.iter().filter(|v| v.is_none()).count()
            + self.ybocs_final.iter().filter(|v| v.is_none()).count()
    }

    pub fn ybocs_baseline(&self) -> &[Option<f64>] {
        &self.ybocs_baseline
    }

    pub fn ybocs_final(&self) -> &[Option<f64>] {
        &self.ybocs_final
    }

    pub fn response(&self) -> &[Option<bool>] {
        &self.response
    }

    pub fn remission(&self) -> &[Option<bool>] {
        &self.remission
    }

    pub fn outcome(&self, outcome: Outcome) -> &[Option<bool>] {
        match outcome {
            Outcome::Response => &self.response,
            Outcome::Remission => &self.remission,
        }
    }

    /// Patients whose outcome derivation hit a degenerate input.
    pub fn outcome_issues(&self) -> &[OutcomeIssue] {
        &self.outcome_issues
    }

    /// Rows as `Option` cells, the inverse of [`Cohort::new`].
    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.n_patients)
            .map(|i| (0..self.n_features()).map(|j| self.value(i, j)).collect())
            .collect()
    }
}

fn check_value(feature: &Feature, v: f64, row: usize) -> Result<()> {
    let err = |message: String| Error::Validation { row, column: feature.name.clone(), message };
    if !v.is_finite() {
        return Err(err(format!("non-finite value {v}")));
    }
    if feature.kind == FeatureKind::Binary && v != 0.0 && v != 1.0 {
        return Err(err(format!("binary feature holds {v}, expected 0 or 1")));
    }
    if let Some((lo, hi)) = feature.effective_bounds() {
        if v < lo || v > hi {
            return Err(err(format!("value {v} outside bounds [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn check_score(column: &str, v: f64, row: usize) -> Result<()> {
    let (lo, hi) = SCORE_BOUNDS;
    if !v.is_finite() || v < lo || v > hi {
        return Err(Error::Validation {
            row,
            column: column.to_string(),
            message: format!("score {v} outside bounds [{lo}, {hi}]"),
        });
    }
    Ok(())
}

/// Recomputes response and remission from the observed severity scores.
///
/// Response needs both scores and a positive baseline; a zero baseline with
/// an observed final score is recorded as an outcome issue and leaves the
/// response missing. Remission needs only the final score.
pub fn derive_outcomes(cohort: &Cohort) -> Cohort {
    let n = cohort.n_patients;
    let mut response = Vec::with_capacity(n);
    let mut remission = Vec::with_capacity(n);
    let mut issues = Vec::new();
    for i in 0..n {
        let (b, f) = (cohort.ybocs_baseline[i], cohort.ybocs_final[i]);
        response.push(match (b, f) {
            (Some(b), Some(f)) => {
                let r = response_from_scores(b, f);
                if r.is_none() {
                    issues.push(OutcomeIssue {
                        patient: i,
                        message: format!("baseline score {b} is not positive; response undefined"),
                    });
                }
                r
            }
            _ => None,
        });
        remission.push(f.map(remission_from_score));
    }
    Cohort { response, remission, outcome_issues: issues, ..cohort.clone() }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Cell tokens (besides the empty string) read as missing.
    pub na_tokens: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { na_tokens: vec!["NA".to_string()] }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema, options: &CsvOptions) -> Result<Cohort> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, options)
}

/// Reads a cohort from CSV. Column order is free; extra columns are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema, options: &CsvOptions) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols = schema.names().into_iter().map(position).collect::<Result<Vec<_>>>()?;
    let baseline_col = position(BASELINE_COLUMN)?;
    let final_col = position(FINAL_COLUMN)?;

    let mut rows = Vec::new();
    let mut baseline = Vec::new();
    let mut final_scores = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based data row, header excluded
        let row_no = r + 1;
        let cell = |col: usize, name: &str| -> Result<Option<f64>> {
            let raw = record.get(col).unwrap_or("");
            if raw.is_empty() || options.na_tokens.iter().any(|t| t == raw) {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                row: row_no,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let row = feature_cols
            .iter()
            .zip(schema.features())
            .map(|(&c, f)| cell(c, &f.name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
        baseline.push(cell(baseline_col, BASELINE_COLUMN)?);
        final_scores.push(cell(final_col, FINAL_COLUMN)?);
    }
    Cohort::new(schema.clone(), rows, baseline, final_scores).map_err(|e| match e {
        // Cohort::new counts rows from 0
        Error::Validation { row, column, message } => Error::Validation { row: row + 1, column, message },
        other => other,
    })
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// Writes a cohort as schema-conformant CSV (`NA` for missing cells).
pub fn write_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = cohort.schema.names();
    header.push(BASELINE_COLUMN);
    header.push(FINAL_COLUMN);
    w.write_record(&header)?;
    for i in 0..cohort.n_patients {
        let mut rec: Vec<String> = (0..cohort.n_features()).map(|j| fmt_cell(cohort.value(i, j))).collect();
        rec.push(fmt_cell(cohort.ybocs_baseline[i]));
        rec.push(fmt_cell(cohort.ybocs_final[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A continuous feature whose training variance was zero and which was
/// therefore left unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeWarning {
    pub column: usize,
    pub message: String,
}

/// Per-column location/scale fitted on a training grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and population standard deviation on `train`, ignoring NaN
    /// cells. Binary and zero-variance columns get the identity transform.
    pub fn fit(train: &Matrix, kinds: &[FeatureKind]) -> Result<(Self, Vec<StandardizeWarning>)> {
        if kinds.len() != train.cols() {
            return Err(Error::Interface(format!(
                "{} feature kinds for {} columns",
                kinds.len(),
                train.cols()
            )));
        }
        let mut location = vec![0.0; train.cols()];
        let mut scale = vec![1.0; train.cols()];
        let mut warnings = Vec::new();
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == FeatureKind::Binary {
                continue;
            }
            let observed: Vec<f64> = (0..train.rows()).map(|i| train.get(i, j)).filter(|v| !v.is_nan()).collect();
            if observed.len() < 2 {
                return Err(Error::Fit(format!(
                    "column {j} has {} observed training values, need at least 2",
                    observed.len()
                )));
            }
            let n = observed.len() as f64;
            let mean = observed.iter().sum::<f64>() / n;
            let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                location[j] = mean;
                scale[j] = var.sqrt();
            } else {
                warnings.push(StandardizeWarning {
                    column: j,
                    message: "zero training variance; passed through unscaled".to_string(),
                });
            }
        }
        Ok((Self { location, scale }, warnings))
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set(i, j, (x.get(i, j) - self.location[j]) / self.scale[j]);
            }
        }
        out
    }
}

/// Fits on `train` and applies to both grids.
pub fn standardize(
    train: &Matrix,
    apply_to: &Matrix,
    kinds: &[FeatureKind],
) -> Result<(Matrix, Matrix, Standardizer, Vec<StandardizeWarning>)> {
    let (params, warnings) = Standardizer::fit(train, kinds)?;
    Ok((params.apply(train), params.apply(apply_to), params, warnings))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    /// Patients in fold `f` (test) and the rest (train), ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled and dealt round-robin; the negatives continue
/// dealing where the positives stopped, so fold sizes differ by at most one
/// and per-fold class counts differ by at most one.
pub fn stratified_folds(outcome: &[bool], k: usize, rng: &mut Stream) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    let mut positives: Vec<usize> = (0..outcome.len()).filter(|&i| outcome[i]).collect();
    let mut negatives: Vec<usize> = (0..outcome.len()).filter(|&i| !outcome[i]).collect();
    if positives.len() < k || negatives.len() < k {
        return Err(Error::Config(format!(
            "stratified {k}-fold split needs at least {k} members per class, got {} positive and {} negative",
            positives.len(),
            negatives.len()
        )));
    }
    positives.shuffle(rng);
    negatives.shuffle(rng);
    let mut fold_of = vec![0; outcome.len()];
    for (slot, &i) in positives.iter().chain(negatives.iter()).enumerate() {
        fold_of[i] = slot % k;
    }
    Ok(FoldAssignment { fold_of, k })
}
