//! End-to-end protocol driven by a flat `key = value` config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{self, Cohort, CsvOptions, Feature, FeatureSchema, Outcome};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_feature_set, EvaluationResult};
use crate::impute::{impute_many, ImputeOptions, ImputedCohort};
use crate::interpret::{self, aggregate_cutpoints, cohort_contingency, Direction, NamedTree, ThresholdReport};
use crate::learners::{grow_tree, FeatureSampler, ModelFamily, ModelSpec, TreeNode, TreeParams};
use crate::par;
use crate::rng::{derive_seed, TAG_PIPELINE};
use crate::select::{forward_select, GridEvaluator, SelectionConfig, SelectionTrace};
use crate::synthgen::{self, GeneratorConfig, Mechanism};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CREDENCE_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Csv(PathBuf),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub m_imputations: usize,
    pub k_folds: usize,
    pub auc_gate: f64,
    /// Stop selection after this many features; unlimited when `None`.
    pub max_features: Option<usize>,
    pub models: Vec<ModelSpec>,
    pub outcomes: Vec<Outcome>,
    pub seed: u64,
    pub schema: FeatureSchema,
    pub input: Input,
    pub generator: GeneratorConfig,
    /// Generator seed when set explicitly; otherwise the pipeline seed.
    pub generator_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub tree_report_feature: String,
    /// Share of per-imputation trees a cutpoint must appear in (±1).
    pub threshold_frequency: f64,
    pub na_tokens: Vec<String>,
    pub impute: ImputeOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            m_imputations: 100,
            k_folds: 5,
            auc_gate: 0.05,
            max_features: None,
            models: ModelFamily::ALL.into_iter().map(ModelSpec::default_for).collect(),
            outcomes: Outcome::ALL.to_vec(),
            seed: 0,
            schema: FeatureSchema::default_schema(),
            input: Input::Synthetic,
            generator: GeneratorConfig::default(),
            generator_seed: None,
            output_dir: None,
            tree_report_feature: "credibility".to_string(),
            threshold_frequency: 0.5,
            na_tokens: CsvOptions::default().na_tokens,
            impute: ImputeOptions::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn parse_reals<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let v = parse_list(value, |s| parse_num::<f64>(key, s))?;
    v.try_into().map_err(|_| Error::Config(format!("`{key}` needs {N} comma-separated numbers")))
}

impl PipelineConfig {
    /// Parses config text. Relative CSV paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut model_params: Vec<(usize, String, String)> = Vec::new();
        let mut extra_feature: Option<Feature> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some((family, _)) = key.split_once('.') {
                if ModelFamily::parse(family).is_ok() {
                    // applied after `models` is known, wherever it appears
                    model_params.push((lineno + 1, key.to_string(), value.to_string()));
                    continue;
                }
            }
            let at = |e: Error| e.at(format!("config line {}", lineno + 1));
            cfg.set(key, value, &mut extra_feature, base_dir).map_err(at)?;
        }
        if let Some(f) = extra_feature {
            cfg.schema = cfg.schema.with_extra_slot(f)?;
        }
        for (lineno, key, value) in model_params {
            let (family, param) = key.split_once('.').expect("checked when collected");
            let family = ModelFamily::parse(family)?;
            if let Some(spec) = cfg.models.iter_mut().find(|s| s.family() == family) {
                spec.set_param(param, &value).map_err(|e| e.at(format!("config line {lineno}")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(e).at(path.display().to_string()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn set(
        &mut self,
        key: &str,
        value: &str,
        extra_feature: &mut Option<Feature>,
        base_dir: &Path,
    ) -> Result<()> {
        match key {
            "m_imputations" => self.m_imputations = parse_num(key, value)?,
            "k_folds" => self.k_folds = parse_num(key, value)?,
            "auc_gate" => self.auc_gate = parse_num(key, value)?,
            "max_features" => self.max_features = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "models" => {
                let families = parse_list(value, ModelFamily::parse)?;
                self.models = families.into_iter().map(ModelSpec::default_for).collect();
            }
            "outcomes" => self.outcomes = parse_list(value, Outcome::parse)?,
            "input" => {
                self.input = if value == "synthetic" {
                    Input::Synthetic
                } else {
                    Input::Csv(base_dir.join(value))
                }
            }
            "output_dir" => self.output_dir = Some(base_dir.join(value)),
            "tree_report_feature" => self.tree_report_feature = value.to_string(),
            "threshold_frequency" => self.threshold_frequency = parse_num(key, value)?,
            "extra_feature" => *extra_feature = Some(Feature::parse_spec(value)?),
            "na_tokens" => self.na_tokens = parse_list(value, |s| Ok(s.to_string()))?,
            "imputation_sweeps" => self.impute.sweeps = parse_num(key, value)?,
            "generator.n_patients" => self.generator.n_patients = parse_num(key, value)?,
            "generator.cred_expect_corr" => self.generator.cred_expect_corr = parse_num(key, value)?,
            "generator.response_probs" => self.generator.response_probs = parse_reals(key, value)?,
            "generator.remission_link" => self.generator.remission_link = parse_reals(key, value)?,
            "generator.plant_thresholds" => self.generator.plant_thresholds = parse_num(key, value)?,
            "generator.missing_rate" => self.generator.missing_rate = parse_num(key, value)?,
            "generator.mechanism" => self.generator.mechanism = Mechanism::parse(value)?,
            "generator.seed" => self.generator_seed = Some(parse_num(key, value)?),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.m_imputations < 1 {
            return fail("m_imputations must be at least 1".into());
        }
        if self.k_folds < 2 {
            return fail("k_folds must be at least 2".into());
        }
        if !(self.auc_gate >= 0.0) {
            return fail(format!("auc_gate must be non-negative, got {}", self.auc_gate));
        }
        if self.models.is_empty() {
            return fail("models list is empty".into());
        }
        if self.outcomes.is_empty() {
            return fail("outcomes list is empty".into());
        }
        if self.schema.index_of(&self.tree_report_feature).is_none() {
            return fail(format!("tree_report_feature `{}` is not in the schema", self.tree_report_feature));
        }
        if !(self.threshold_frequency > 0.0 && self.threshold_frequency <= 1.0) {
            return fail("threshold_frequency must lie in (0, 1]".into());
        }
        if self.input == Input::Synthetic {
            self.generator_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for spec in &self.models {
            spec.validate()?;
        }
        Ok(())
    }

    /// The generator settings with the effective seed filled in.
    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig { seed: self.generator_seed.unwrap_or(self.seed), ..self.generator.clone() }
    }

    /// Overrides the pipeline seed; the generator follows unless pinned.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Every effective setting as text, keyed like the config file.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut e = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            e.insert(k.to_string(), v);
        };
        put("m_imputations", self.m_imputations.to_string());
        put("k_folds", self.k_folds.to_string());
        put("auc_gate", self.auc_gate.to_string());
        put("max_features", self.max_features.map_or("none".into(), |v| v.to_string()));
        put("models", self.models.iter().map(|m| m.family().name()).collect::<Vec<_>>().join(","));
        put("outcomes", self.outcomes.iter().map(|o| o.name()).collect::<Vec<_>>().join(","));
        put("seed", self.seed.to_string());
        put("tree_report_feature", self.tree_report_feature.clone());
        put("threshold_frequency", self.threshold_frequency.to_string());
        put("imputation_sweeps", self.impute.sweeps.to_string());
        put("na_tokens", self.na_tokens.join(","));
        put(
            "schema",
            self.schema.features().iter().map(|f| format!("{}:{}", f.name, kind_name(f.kind))).collect::<Vec<_>>().join(","),
        );
        for spec in &self.models {
            put(&format!("{}.params", spec.family().name()), serde_json::to_string(spec).unwrap_or_default());
        }
        match &self.input {
            Input::Csv(path) => put("input", path.display().to_string()),
            Input::Synthetic => {
                let g = self.generator_config();
                put("input", "synthetic".into());
                put("generator.n_patients", g.n_patients.to_string());
                put("generator.cred_expect_corr", g.cred_expect_corr.to_string());
                put("generator.response_probs", join_reals(&g.response_probs));
                put("generator.remission_link", join_reals(&g.remission_link));
                put("generator.plant_thresholds", g.plant_thresholds.to_string());
                put("generator.missing_rate", g.missing_rate.to_string());
                put(
                    "generator.mechanism",
                    match &g.mechanism {
                        Mechanism::Mcar => "mcar".into(),
                        Mechanism::Mar { driver } => format!("mar:{driver}"),
                    },
                );
                put("generator.seed", g.seed.to_string());
            }
        }
        e
    }
}

fn kind_name(kind: dataset::FeatureKind) -> &'static str {
    match kind {
        dataset::FeatureKind::Continuous => "continuous",
        dataset::FeatureKind::Binary => "binary",
        dataset::FeatureKind::Ordinal => "ordinal",
    }
}

fn join_reals(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Loads the configured CSV or draws the configured synthetic cohort.
pub fn load_input(config: &PipelineConfig) -> Result<Cohort> {
    match &config.input {
        Input::Csv(path) => {
            let opts = CsvOptions { na_tokens: config.na_tokens.clone() };
            dataset::load_csv(path, &config.schema, &opts).map_err(|e| e.at(path.display().to_string()))
        }
        Input::Synthetic => synthgen::generate(&config.generator_config(), &config.schema),
    }
}

/// Selection and evaluation for one (model, outcome) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcomeResult {
    pub model: ModelFamily,
    pub outcome: Outcome,
    pub trace: SelectionTrace,
    /// `None` when selection accepted no feature.
    pub evaluation: Option<EvaluationResult>,
}

/// Per-imputation trees behind one outcome's thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTrees {
    pub outcome: Outcome,
    pub features: Vec<String>,
    pub trees: Vec<NamedTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub credibility: Option<f64>,
    pub baseline: Option<f64>,
    pub response: Option<bool>,
    pub remission: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub feature_names: Vec<String>,
    pub results: Vec<ModelOutcomeResult>,
    pub threshold_reports: Vec<ThresholdReport>,
    pub trees: Vec<OutcomeTrees>,
    pub scatter: Vec<ScatterRow>,
    pub provenance: Provenance,
    pub imputations: Vec<ImputedCohort>,
}

impl RunReport {
    pub fn result(&self, model: ModelFamily, outcome: Outcome) -> Option<&ModelOutcomeResult> {
        self.results.iter().find(|r| r.model == model && r.outcome == outcome)
    }
}

/// Runs the protocol on the configured input.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let cohort = load_input(config)?;
    run_on_cohort(config, cohort)
}

/// Runs the protocol on an already loaded cohort.
pub fn run_on_cohort(config: &PipelineConfig, cohort: Cohort) -> Result<RunReport> {
    config.validate()?;
    if cohort.schema() != &config.schema {
        return Err(Error::Schema("cohort schema differs from the configured schema".into()));
    }
    let imputed =
        impute_many(&cohort, config.m_imputations, derive_seed(config.seed, &[TAG_PIPELINE, 1]), &config.impute)?;
    let eval_seed = derive_seed(config.seed, &[TAG_PIPELINE, 2]);
    let candidates: Vec<usize> = (0..config.schema.len()).collect();
    let selection = SelectionConfig { gate: config.auc_gate, baseline_auc: 0.5, max_features: config.max_features };

    let mut results = Vec::new();
    for &outcome in &config.outcomes {
        for spec in &config.models {
            let at = |e: Error| e.at(format!("model {}, outcome {outcome}", spec.family()));
            let evaluator = GridEvaluator { spec, imputed: &imputed, outcome, k_folds: config.k_folds, seed: eval_seed };
            let trace = forward_select(&candidates, &evaluator, &selection).map_err(at)?;
            let selected = trace.selected();
            let evaluation = if selected.is_empty() {
                None
            } else {
                Some(evaluate_feature_set(&selected, spec, &imputed, outcome, config.k_folds, eval_seed).map_err(at)?)
            };
            results.push(ModelOutcomeResult { model: spec.family(), outcome, trace, evaluation });
        }
    }

    let names: Vec<String> = config.schema.names().iter().map(|s| s.to_string()).collect();
    let report_feature = config.schema.index_of(&config.tree_report_feature).expect("validated");
    let tree_params = config
        .models
        .iter()
        .find_map(|s| match s {
            ModelSpec::DecisionTree(p) => Some(p.clone()),
            _ => None,
        })
        .unwrap_or_default();

    let mut threshold_reports = Vec::new();
    let mut trees = Vec::new();
    for &outcome in &config.outcomes {
        let features = results
            .iter()
            .find(|r| r.model == ModelFamily::DecisionTree && r.outcome == outcome)
            .map(|r| r.trace.selected())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| vec![report_feature]);
        let fitted = fit_interpretation_trees(&imputed, &features, outcome, &tree_params);
        let (reports, _) =
            threshold_rows(&cohort, &fitted, &features, report_feature, outcome, config.threshold_frequency);
        threshold_reports.extend(reports);
        let feature_names: Vec<String> = features.iter().map(|&f| names[f].clone()).collect();
        trees.push(OutcomeTrees {
            outcome,
            trees: fitted.iter().map(|t| NamedTree::from_tree(t, &feature_names)).collect(),
            features: feature_names,
        });
    }

    let scatter = scatter_rows(&cohort);
    let provenance =
        Provenance { version: env!("CARGO_PKG_VERSION").to_string(), seed: config.seed, config: config.echo() };
    Ok(RunReport { feature_names: names, results, threshold_reports, trees, scatter, provenance, imputations: imputed })
}

/// One tree per imputation on the raw completed values of `features`
/// (column order as given), labelled by the completed outcome.
pub fn fit_interpretation_trees(
    imputed: &[ImputedCohort],
    features: &[usize],
    outcome: Outcome,
    params: &TreeParams,
) -> Vec<TreeNode> {
    par::map_indexed(imputed.len(), |m| {
        let data = &imputed[m];
        let rows: Vec<usize> = (0..data.completed_values.rows()).collect();
        let x = data.completed_values.select(&rows, features);
        grow_tree(&x, data.outcome(outcome), &rows, params, &mut FeatureSampler::All)
    })
}

/// Aggregated cutpoints on `feature` and their contingency rows.
///
/// `tree_features[c]` is the cohort column behind tree column `c`.
/// Contingency tables use observed values only. The lowest cutpoint is
/// reported as `<=`, the highest as `>`, and any other (or a lone one) both
/// ways.
pub fn threshold_rows(
    cohort: &Cohort,
    trees: &[TreeNode],
    tree_features: &[usize],
    feature: usize,
    outcome: Outcome,
    min_frequency: f64,
) -> (Vec<ThresholdReport>, Vec<interpret::AggregatedCutpoint>) {
    let Some(column) = tree_features.iter().position(|&f| f == feature) else {
        return (Vec::new(), Vec::new());
    };
    let raw: Vec<Vec<f64>> = trees.iter().map(|t| interpret::extract_thresholds(t, column)).collect();
    let per_tree: Vec<Vec<i64>> = raw.iter().map(|c| c.iter().map(|&v| interpret::integer_form(v)).collect()).collect();
    let aggregated = aggregate_cutpoints(&per_tree, min_frequency);
    let name = &cohort.schema().feature(feature).name;
    let mut reports = Vec::new();
    for (i, cut) in aggregated.iter().enumerate() {
        // representative raw cutpoint: mean of those with this integer form
        let exact: Vec<f64> = raw.iter().flatten().copied().filter(|&v| interpret::integer_form(v) == cut.value).collect();
        let cutpoint = if exact.is_empty() {
            cut.value as f64 + 0.5
        } else {
            exact.iter().sum::<f64>() / exact.len() as f64
        };
        let lowest = i == 0;
        let highest = i + 1 == aggregated.len();
        let mut directions = Vec::new();
        if lowest || !highest {
            directions.push(Direction::AtMost);
        }
        if highest || !lowest {
            directions.push(Direction::Above);
        }
        for direction in directions {
            let table = cohort_contingency(cohort, feature, cutpoint, direction, outcome);
            reports.push(ThresholdReport::build(name, cutpoint, direction, outcome, cut.frequency, table));
        }
    }
    (reports, aggregated)
}

fn scatter_rows(cohort: &Cohort) -> Vec<ScatterRow> {
    let cred = cohort.schema().index_of("credibility");
    (0..cohort.n_patients())
        .map(|i| ScatterRow {
            credibility: cred.and_then(|j| cohort.value(i, j)),
            baseline: cohort.ybocs_baseline()[i],
            response: cohort.response()[i],
            remission: cohort.remission()[i],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitOptions {
    pub dump_imputations: bool,
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn bool_cell(v: Option<bool>) -> String {
    cell(v.map(|b| u8::from(b)))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn json_bytes(value: &Value) -> Result<Vec<u8>> {
    // serde_json maps are key-sorted, so the output is stable
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Renders every report file in memory, in manifest order.
pub fn render_report(report: &RunReport) -> Result<Vec<(String, Vec<u8>)>> {
    let names = &report.feature_names;
    let feature_list = |fs: &[usize]| fs.iter().map(|&f| names[f].as_str()).collect::<Vec<_>>().join(";");
    let mut files = Vec::new();

    for outcome in Outcome::ALL {
        let rows: Vec<Vec<String>> = report
            .results
            .iter()
            .filter(|r| r.outcome == outcome)
            .map(|r| {
                vec![
                    r.model.name().to_string(),
                    cell(r.evaluation.as_ref().map(|e| e.pooled_auc)),
                    cell(r.evaluation.as_ref().map(|e| e.run_count)),
                    cell(r.evaluation.as_ref().map(|e| e.excluded_runs)),
                    feature_list(&r.trace.selected()),
                ]
            })
            .collect();
        if report.results.iter().any(|r| r.outcome == outcome) {
            let header = ["model", "pooled_auc", "run_count", "excluded_runs", "selected_features"];
            files.push((format!("results_{}.csv", outcome.name()), csv_bytes(&header, &rows)?));
        }
    }

    let rows: Vec<Vec<String>> = report
        .threshold_reports
        .iter()
        .map(|t| {
            let [a, b, c, d] = t.table.cells();
            vec![
                t.feature.clone(),
                t.outcome.name().to_string(),
                t.direction.symbol().to_string(),
                format!("{} {}", t.direction.symbol(), t.integer_form),
                t.cutpoint.to_string(),
                t.frequency.to_string(),
                a.to_string(),
                b.to_string(),
                c.to_string(),
                d.to_string(),
                if t.odds_ratio_infinite { "inf".to_string() } else { t.odds_ratio.to_string() },
                t.correction_applied.to_string(),
                t.p_value.to_string(),
                t.degenerate.to_string(),
            ]
        })
        .collect();
    let header = [
        "feature",
        "outcome",
        "direction",
        "threshold",
        "cutpoint",
        "frequency",
        "exposed_pos",
        "exposed_neg",
        "unexposed_pos",
        "unexposed_neg",
        "odds_ratio",
        "correction_applied",
        "p_value",
        "degenerate",
    ];
    files.push(("thresholds.csv".to_string(), csv_bytes(&header, &rows)?));

    let traces: Vec<Value> = report
        .results
        .iter()
        .map(|r| {
            let name = |f: usize| names[f].clone();
            let rounds: Vec<Value> = r
                .trace
                .rounds
                .iter()
                .map(|round| {
                    json!({
                        "previous_auc": round.previous_auc,
                        "best": name(round.best.feature),
                        "accepted": round.accepted,
                        "candidates": round.candidates.iter()
                            .map(|c| json!({"feature": name(c.feature), "pooled_auc": c.pooled_auc}))
                            .collect::<Vec<_>>(),
                    })
                })
                .collect();
            json!({
                "model": r.model.name(),
                "outcome": r.outcome.name(),
                "gate": r.trace.gate,
                "baseline_auc": r.trace.baseline_auc,
                "steps": r.trace.steps.iter()
                    .map(|s| json!({"feature": name(s.feature), "pooled_auc_after": s.pooled_auc_after}))
                    .collect::<Vec<_>>(),
                "rejected_at_final_step": r.trace.rejected_at_final_step.iter()
                    .map(|c| json!({"feature": name(c.feature), "pooled_auc": c.pooled_auc}))
                    .collect::<Vec<_>>(),
                "rounds": rounds,
            })
        })
        .collect();
    files.push(("selection_trace.json".to_string(), json_bytes(&Value::Array(traces))?));

    let rows: Vec<Vec<String>> = report
        .scatter
        .iter()
        .map(|s| vec![cell(s.credibility), cell(s.baseline), bool_cell(s.response), bool_cell(s.remission)])
        .collect();
    files.push(("scatter.csv".to_string(), csv_bytes(&["credibility", "ybocs_baseline", "response", "remission"], &rows)?));

    files.push(("trees.json".to_string(), json_bytes(&serde_json::to_value(&report.trees)?)?));

    let evaluations: Vec<Value> = report
        .results
        .iter()
        .map(|r| {
            json!({
                "model": r.model.name(),
                "outcome": r.outcome.name(),
                "evaluation": r.evaluation.as_ref().map(|e| json!({
                    "features": e.features.iter().map(|&f| names[f].clone()).collect::<Vec<_>>(),
                    "pooled_auc": e.pooled_auc,
                    "run_count": e.run_count,
                    "excluded_runs": e.excluded_runs,
                    "per_run_auc": e.per_run_auc,
                })),
            })
        })
        .collect();
    files.push(("evaluation.json".to_string(), json_bytes(&Value::Array(evaluations))?));
    files.push(("provenance.json".to_string(), json_bytes(&serde_json::to_value(&report.provenance)?)?));
    Ok(files)
}

/// Writes the report files and `manifest.json` into `output_dir`.
///
/// Returns the manifest: every written file except the manifest itself,
/// with its SHA-256.
pub fn emit_report(report: &RunReport, output_dir: &Path, options: EmitOptions) -> Result<Vec<ManifestEntry>> {
    if report.results.is_empty() {
        return Err(Error::Config("report has no (model, outcome) results; models list was empty".into()));
    }
    let mut files = render_report(report)?;
    if options.dump_imputations {
        for imp in &report.imputations {
            let mut buf = Vec::new();
            imp.write_csv(&mut buf)?;
            files.push((format!("imputations/imputation_{:03}.csv", imp.imputation_index), buf));
        }
    }
    let io_at = |path: &Path| {
        let shown = path.display().to_string();
        move |e: std::io::Error| Error::Io(e).at(shown.clone())
    };
    fs::create_dir_all(output_dir).map_err(io_at(output_dir))?;
    let mut manifest = Vec::new();
    for (name, bytes) in &files {
        let path = output_dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_at(parent))?;
        }
        fs::write(&path, bytes).map_err(io_at(&path))?;
        manifest.push(ManifestEntry { file: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() });
    }
    let value = json!({ "files": serde_json::to_value(&manifest)? });
    let path = output_dir.join("manifest.json");
    fs::write(&path, json_bytes(&value)?).map_err(io_at(&path))?;
    Ok(manifest)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Resolves the output directory: explicit config, then the environment,
/// then `./credence-output`.
pub fn resolve_output_dir(config: &PipelineConfig) -> PathBuf {
    config
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("credence-output"))
}
