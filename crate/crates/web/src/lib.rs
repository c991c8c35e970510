//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; the `*_json` functions are the same operations for native use.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use credence::dataset::{FeatureSchema, Outcome};
use credence::impute::{impute_many, ImputeOptions};
use credence::interpret::{cohort_contingency, Direction, ThresholdReport};
use credence::learners::{ModelFamily, ModelSpec, TreeParams};
use credence::pipeline::{fit_interpretation_trees, threshold_rows};
use credence::select::{forward_select, GridEvaluator, SelectionConfig};
use credence::synthgen::{generate, GeneratorConfig};
use credence::{Error, Result};

/// Cohorts above this size would stall a browser tab.
pub const MAX_PATIENTS: usize = 2000;
pub const MAX_IMPUTATIONS: usize = 20;

fn generator(n_patients: usize, seed: u64, cred_expect_corr: f64, missing_rate: f64) -> Result<GeneratorConfig> {
    if n_patients == 0 || n_patients > MAX_PATIENTS {
        return Err(Error::Config(format!("patients must be between 1 and {MAX_PATIENTS}")));
    }
    Ok(GeneratorConfig { n_patients, seed, cred_expect_corr, missing_rate, ..GeneratorConfig::default() })
}

fn check_imputations(m: usize) -> Result<()> {
    if m == 0 || m > MAX_IMPUTATIONS {
        return Err(Error::Config(format!("imputations must be between 1 and {MAX_IMPUTATIONS}")));
    }
    Ok(())
}

fn report_json(r: &ThresholdReport) -> Value {
    json!({
        "threshold": format!("{} {}", r.direction.symbol(), r.integer_form),
        "cutpoint": r.cutpoint,
        "frequency": r.frequency,
        "table": r.table.cells(),
        "odds_ratio": if r.odds_ratio_infinite { Value::Null } else { json!(r.odds_ratio) },
        "odds_ratio_infinite": r.odds_ratio_infinite,
        "correction_applied": r.correction_applied,
        "p_value": r.p_value,
    })
}

/// Synthetic cohort as scatter points plus summary counts.
pub fn generate_cohort_json(n_patients: usize, seed: u64, cred_expect_corr: f64, missing_rate: f64) -> Result<String> {
    let schema = FeatureSchema::default_schema();
    let cohort = generate(&generator(n_patients, seed, cred_expect_corr, missing_rate)?, &schema)?;
    let cred = schema.index_of("credibility").expect("default schema");
    let points: Vec<Value> = (0..cohort.n_patients())
        .filter_map(|i| {
            let c = cohort.value(i, cred)?;
            let b = cohort.ybocs_baseline()[i]?;
            Some(json!([c, b, cohort.response()[i], cohort.remission()[i]]))
        })
        .collect();
    let count = |v: &[Option<bool>]| v.iter().filter(|x| **x == Some(true)).count();
    Ok(json!({
        "patients": cohort.n_patients(),
        "missing_cells": cohort.missing_count(),
        "responders": count(cohort.response()),
        "remitters": count(cohort.remission()),
        "points": points,
    })
    .to_string())
}

/// Depth-3 trees on credibility alone, one per imputation, aggregated into
/// threshold rows for `outcome` ("response" or "remission").
pub fn credibility_thresholds_json(n_patients: usize, seed: u64, imputations: usize, outcome: &str) -> Result<String> {
    check_imputations(imputations)?;
    let outcome = Outcome::parse(outcome)?;
    let schema = FeatureSchema::default_schema();
    let cohort = generate(&generator(n_patients, seed, 0.67, 0.1)?, &schema)?;
    let cred = schema.index_of("credibility").expect("default schema");
    let imputed = impute_many(&cohort, imputations, seed, &ImputeOptions::default())?;
    let trees = fit_interpretation_trees(&imputed, &[cred], outcome, &TreeParams::default());
    let (rows, aggregated) = threshold_rows(&cohort, &trees, &[cred], cred, outcome, 0.5);
    // the fixed predicates the planted bands were built around
    let planted: Vec<Value> = [(16.5, Direction::AtMost), (22.5, Direction::Above)]
        .into_iter()
        .map(|(cut, dir)| {
            let table = cohort_contingency(&cohort, cred, cut, dir, outcome);
            report_json(&ThresholdReport::build("credibility", cut, dir, outcome, 1.0, table))
        })
        .collect();
    Ok(json!({
        "outcome": outcome.name(),
        "cutpoints": aggregated.iter().map(|a| json!({"value": a.value, "frequency": a.frequency})).collect::<Vec<_>>(),
        "rows": rows.iter().map(report_json).collect::<Vec<_>>(),
        "planted": planted,
    })
    .to_string())
}

/// Forward selection over all 17 features for one model family.
pub fn select_features_json(
    n_patients: usize,
    seed: u64,
    model: &str,
    outcome: &str,
    imputations: usize,
    gate: f64,
) -> Result<String> {
    check_imputations(imputations)?;
    let spec = ModelSpec::default_for(ModelFamily::parse(model)?);
    let outcome = Outcome::parse(outcome)?;
    let schema = FeatureSchema::default_schema();
    let cohort = generate(&generator(n_patients, seed, 0.67, 0.1)?, &schema)?;
    let imputed = impute_many(&cohort, imputations, seed, &ImputeOptions::default())?;
    let evaluator = GridEvaluator { spec: &spec, imputed: &imputed, outcome, k_folds: 5, seed };
    let config = SelectionConfig { gate, ..SelectionConfig::default() };
    let trace = forward_select(&(0..schema.len()).collect::<Vec<_>>(), &evaluator, &config)?;
    let name = |f: usize| schema.feature(f).name.clone();
    Ok(json!({
        "model": spec.family().name(),
        "outcome": outcome.name(),
        "gate": gate,
        "steps": trace.steps.iter().map(|s| json!({"feature": name(s.feature), "auc": s.pooled_auc_after})).collect::<Vec<_>>(),
        "rounds": trace.rounds.iter().map(|r| json!({
            "previous_auc": r.previous_auc,
            "accepted": r.accepted,
            "candidates": r.candidates.iter().map(|c| json!({"feature": name(c.feature), "auc": c.pooled_auc})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
    .to_string())
}

fn to_js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = generateCohort)]
pub fn generate_cohort(n_patients: usize, seed: u32, cred_expect_corr: f64, missing_rate: f64) -> std::result::Result<String, JsError> {
    to_js(generate_cohort_json(n_patients, seed.into(), cred_expect_corr, missing_rate))
}

#[wasm_bindgen(js_name = credibilityThresholds)]
pub fn credibility_thresholds(n_patients: usize, seed: u32, imputations: usize, outcome: &str) -> std::result::Result<String, JsError> {
    to_js(credibility_thresholds_json(n_patients, seed.into(), imputations, outcome))
}

#[wasm_bindgen(js_name = selectFeatures)]
pub fn select_features(
    n_patients: usize,
    seed: u32,
    model: &str,
    outcome: &str,
    imputations: usize,
    gate: f64,
) -> std::result::Result<String, JsError> {
    to_js(select_features_json(n_patients, seed.into(), model, outcome, imputations, gate))
}
