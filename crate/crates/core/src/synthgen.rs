//! Synthetic cohorts with planted structure.
//!
//! Credibility and expectancy come from a Gaussian copula discretized to
//! the 3..27 scale, with the latent correlation calibrated so the
//! *discretized* pair hits the requested Pearson correlation. Response
//! follows three credibility bands (≤ 16, 17..22, > 22); remission follows
//! a logistic link on credibility and baseline severity among the patients
//! whose score trajectories allow it. Final severity scores are then drawn
//! to agree with both outcomes, and missingness is injected last.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Cohort, FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const CREDIBILITY_RANGE: (i64, i64) = (3, 27);
/// Latent-scale location and spread of the credibility/expectancy marginal.
pub const CREDIBILITY_MEAN: f64 = 18.0;
pub const CREDIBILITY_SD: f64 = 5.0;
/// Band edges of the planted response model.
pub const LOW_BAND_MAX: f64 = 16.0;
pub const MID_BAND_MAX: f64 = 22.0;
/// Centering constants of the remission link.
const LINK_CREDIBILITY_CENTER: f64 = 18.0;
const LINK_BASELINE_CENTER: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    /// Missingness probability rises with the rank of an always-observed
    /// driver feature.
    Mar { driver: String },
}

impl Mechanism {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "mcar" {
            return Ok(Mechanism::Mcar);
        }
        match s.strip_prefix("mar:") {
            Some(driver) if !driver.trim().is_empty() => Ok(Mechanism::Mar { driver: driver.trim().to_string() }),
            _ => Err(Error::Config(format!("unknown missingness mechanism `{s}`, expected mcar or mar:<feature>"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub cred_expect_corr: f64,
    /// Response probability for credibility ≤ 16, 17..22 and > 22.
    pub response_probs: [f64; 3],
    /// When off, every patient responds with the middle probability.
    pub plant_thresholds: bool,
    /// Logistic remission coefficients: intercept, per credibility point
    /// (centered at 18), per baseline severity point (centered at 30).
    pub remission_link: [f64; 3],
    pub missing_rate: f64,
    pub mechanism: Mechanism,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_patients: 300,
            cred_expect_corr: 0.67,
            response_probs: [0.15, 0.40, 0.85],
            plant_thresholds: true,
            remission_link: [0.0, 0.30, -0.10],
            missing_rate: 0.1,
            mechanism: Mechanism::Mcar,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Outcomes independent of every feature.
    pub fn null(n_patients: usize, seed: u64) -> Self {
        Self {
            n_patients,
            response_probs: [0.4, 0.4, 0.4],
            plant_thresholds: false,
            remission_link: [-0.5, 0.0, 0.0],
            missing_rate: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Generation(m));
        if !(self.cred_expect_corr > -1.0 && self.cred_expect_corr < 1.0) {
            return fail(format!("cred_expect_corr {} outside (-1, 1)", self.cred_expect_corr));
        }
        let [lo, mid, hi] = self.response_probs;
        if self.response_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("response probabilities must lie in [0, 1]".into());
        }
        if self.plant_thresholds && !(lo < mid && mid < hi) {
            return fail(format!("planted response bands need p_low < p_mid < p_high, got {lo}, {mid}, {hi}"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return fail(format!("missing_rate {} outside [0, 1)", self.missing_rate));
        }
        if matches!(self.mechanism, Mechanism::Mar { .. }) && self.missing_rate > 0.5 {
            return fail("MAR mechanism supports missing_rate up to 0.5".into());
        }
        if self.remission_link.iter().any(|c| !c.is_finite()) {
            return fail("remission link coefficients must be finite".into());
        }
        Ok(())
    }

    /// Population odds ratio of response for `credibility <= 16` versus
    /// above, from the band probabilities and the credibility marginal.
    pub fn population_odds_ratio_low(&self) -> f64 {
        let probs = credibility_marginal();
        let (mut w_low, mut r_low, mut w_high, mut r_high) = (0.0, 0.0, 0.0, 0.0);
        for (v, p) in (CREDIBILITY_RANGE.0..=CREDIBILITY_RANGE.1).zip(probs) {
            let r = self.band_probability(v as f64);
            if (v as f64) <= LOW_BAND_MAX {
                w_low += p;
                r_low += p * r;
            } else {
                w_high += p;
                r_high += p * r;
            }
        }
        let (a, b) = (r_low / w_low, r_high / w_high);
        (a / (1.0 - a)) / (b / (1.0 - b))
    }

    fn band_probability(&self, credibility: f64) -> f64 {
        let [lo, mid, hi] = self.response_probs;
        if !self.plant_thresholds {
            mid
        } else if credibility <= LOW_BAND_MAX {
            lo
        } else if credibility <= MID_BAND_MAX {
            mid
        } else {
            hi
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Latent cut points: the discretized value steps up by one at each.
fn latent_steps() -> Vec<f64> {
    (CREDIBILITY_RANGE.0..CREDIBILITY_RANGE.1)
        .map(|v| (v as f64 + 0.5 - CREDIBILITY_MEAN) / CREDIBILITY_SD)
        .collect()
}

/// `clamp(round(mean + sd·z), 3, 27)`.
pub fn discretize(z: f64) -> f64 {
    (CREDIBILITY_MEAN + CREDIBILITY_SD * z).round().clamp(CREDIBILITY_RANGE.0 as f64, CREDIBILITY_RANGE.1 as f64)
}

/// Probability of each value 3..=27 under [`discretize`] of a standard normal.
pub fn credibility_marginal() -> Vec<f64> {
    let steps = latent_steps();
    let mut probs = Vec::with_capacity(steps.len() + 1);
    let mut prev = 0.0;
    for t in &steps {
        let c = std_normal_cdf(*t);
        probs.push(c - prev);
        prev = c;
    }
    probs.push(1.0 - prev);
    probs
}

/// Pearson correlation of `discretize(Z1)`, `discretize(Z2)` for standard
/// normals with correlation `rho`, via the Hermite (Mehler) expansion of
/// the step function.
pub fn discretized_correlation(rho: f64) -> f64 {
    const TERMS: usize = 400;
    let steps = latent_steps();
    let probs = credibility_marginal();
    let values = CREDIBILITY_RANGE.0..=CREDIBILITY_RANGE.1;
    let mean: f64 = values.clone().zip(&probs).map(|(v, p)| v as f64 * p).sum();
    let var: f64 = values.zip(&probs).map(|(v, p)| (v as f64 - mean).powi(2) * p).sum();

    // normalized Hermite polynomials h_k = He_k / sqrt(k!) at every step
    let mut h_prev = vec![0.0; steps.len()];
    let mut h_cur = vec![1.0; steps.len()];
    let mut cov = 0.0;
    let mut rho_k = 1.0;
    for k in 1..=TERMS {
        // coefficient of h_k in f: Σ φ(t) h_{k-1}(t) / sqrt(k)
        let coef: f64 = steps.iter().zip(&h_cur).map(|(t, h)| std_normal_pdf(*t) * h).sum::<f64>() / (k as f64).sqrt();
        rho_k *= rho;
        cov += rho_k * coef * coef;
        let km1 = (k - 1) as f64;
        for (i, t) in steps.iter().enumerate() {
            let next = (t * h_cur[i] - km1.sqrt() * h_prev[i]) / (k as f64).sqrt();
            h_prev[i] = h_cur[i];
            h_cur[i] = next;
        }
    }
    cov / var
}

/// Latent correlation whose discretized pair has Pearson correlation
/// `target`.
pub fn calibrate_latent_correlation(target: f64) -> f64 {
    let (mut lo, mut hi) = (-0.999, 0.999);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if discretized_correlation(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn uniform_int(rng: &mut Stream, lo: i64, hi: i64) -> f64 {
    rng.random_range(lo..=hi) as f64
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Draws a cohort. Deterministic given `config.seed`.
pub fn generate(config: &GeneratorConfig, schema: &FeatureSchema) -> Result<Cohort> {
    generate_with_truth(config, schema).map(|(observed, _)| observed)
}

/// The observed cohort and the complete cohort it was masked from.
pub fn generate_with_truth(config: &GeneratorConfig, schema: &FeatureSchema) -> Result<(Cohort, Cohort)> {
    config.validate()?;
    let n = config.n_patients;
    let p = schema.len();
    let idx = |name: &str| schema.index_of(name);
    let mut rng = rng::stream(config.seed, &[0x5EED]);
    let latent_rho = calibrate_latent_correlation(config.cred_expect_corr);

    let mut rows = vec![vec![0.0; p]; n];
    let mut baseline = vec![0.0; n];
    let mut final_scores = vec![0.0; n];
    let age = Normal::<f64>::new(32.0, 10.0).expect("valid normal");
    let duration = Exp::<f64>::new(1.0 / 12.0).expect("valid exponential");
    for i in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let z2 = latent_rho * z1 + (1.0 - latent_rho * latent_rho).sqrt() * e;
        let credibility = discretize(z1);
        let expectancy = discretize(z2);
        let b = (30.0 + 5.0 * rng.sample::<f64, _>(StandardNormal)).round().clamp(20.0, 48.0);

        for (j, f) in schema.features().iter().enumerate() {
            let v = match f.name.as_str() {
                "credibility" => credibility,
                "expectancy" => expectancy,
                "bdd_ybocs_baseline" => b,
                "age" => age.sample(&mut rng).round().clamp(18.0, 75.0),
                "gender_identity" => bernoulli(&mut rng, 0.75),
                "sexual_minority" | "race_ethnicity" | "postgrad_education" => bernoulli(&mut rng, 0.3),
                "urica" => ((9.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)) * 10.0).round() / 10.0,
                "babs_tot_recalc" => (10.0 + 4.0 * rng.sample::<f64, _>(StandardNormal)).round().clamp(0.0, 24.0),
                "qids" => (11.0 + 5.0 * rng.sample::<f64, _>(StandardNormal)).round().clamp(0.0, 27.0),
                "bdd_duration" => (duration.sample(&mut rng) * 10.0).round().clamp(0.0, 1000.0) / 10.0,
                "treatment_group" => bernoulli(&mut rng, 0.5),
                "ssri_use" => bernoulli(&mut rng, 0.4),
                "any_comorbidity" => bernoulli(&mut rng, 0.6),
                "covid_impact" => uniform_int(&mut rng, 1, 5),
                _ => generic_value(&mut rng, f.kind, f.effective_bounds()),
            };
            rows[i][j] = match f.effective_bounds() {
                Some((lo, hi)) => v.clamp(lo, hi),
                None => v,
            };
        }

        let responds = rng.random::<f64>() < config.band_probability(credibility);
        let [l0, l_cred, l_base] = config.remission_link;
        let eta = l0 + l_cred * (credibility - LINK_CREDIBILITY_CENTER) + l_base * (b - LINK_BASELINE_CENTER);
        let remits = rng.random::<f64>() < sigmoid(eta);
        baseline[i] = b;
        final_scores[i] = final_score(&mut rng, b, responds, remits);
    }

    let complete_rows: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
    let complete = Cohort::new(
        schema.clone(),
        complete_rows.clone(),
        baseline.iter().map(|&v| Some(v)).collect(),
        final_scores.iter().map(|&v| Some(v)).collect(),
    )?;

    let mut mask_rng = rng::stream(config.seed, &[0x3A5C]);
    let masked = mask(config, schema, &rows, &mut mask_rng)?;
    let mut obs_rows = complete_rows;
    let mut obs_baseline: Vec<Option<f64>> = baseline.iter().map(|&v| Some(v)).collect();
    let mut obs_final: Vec<Option<f64>> = final_scores.iter().map(|&v| Some(v)).collect();
    let baseline_feature = idx("bdd_ybocs_baseline");
    for i in 0..n {
        for j in 0..p {
            if masked.cells[i][j] {
                obs_rows[i][j] = None;
                if Some(j) == baseline_feature {
                    obs_baseline[i] = None;
                }
            }
        }
        if masked.final_score[i] {
            obs_final[i] = None;
        }
    }
    let observed = Cohort::new(schema.clone(), obs_rows, obs_baseline, obs_final)?;
    Ok((observed, complete))
}

fn bernoulli(rng: &mut Stream, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn generic_value(rng: &mut Stream, kind: FeatureKind, bounds: Option<(f64, f64)>) -> f64 {
    match (kind, bounds) {
        (FeatureKind::Binary, _) => bernoulli(rng, 0.5),
        (FeatureKind::Ordinal, Some((lo, hi))) => uniform_int(rng, lo.ceil() as i64, hi.floor() as i64),
        (FeatureKind::Ordinal, None) => (5.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).round(),
        (FeatureKind::Continuous, Some((lo, hi))) => rng.random_range(lo..=hi),
        (FeatureKind::Continuous, None) => rng.sample(StandardNormal),
    }
}

/// Integer final score consistent with the drawn outcomes where the
/// baseline allows it. Response needs `final <= 0.7 · baseline`, remission
/// `final <= 16`.
fn final_score(rng: &mut Stream, baseline: f64, responds: bool, remits: bool) -> f64 {
    let b = baseline as i64;
    // largest final score that still counts as a 30% reduction
    let resp_max = (7 * b) / 10;
    let cap = (b + 4).min(48);
    let remit_max = 16;
    if responds {
        let remit_hi = remit_max.min(resp_max);
        if remits || resp_max < remit_max + 1 {
            uniform_int(rng, (remit_hi - 10).max(0), remit_hi)
        } else {
            uniform_int(rng, remit_max + 1, resp_max)
        }
    } else {
        let lo = resp_max + 1;
        if remits && lo <= remit_max {
            uniform_int(rng, lo, remit_max)
        } else {
            uniform_int(rng, lo.max(remit_max + 1), cap)
        }
    }
}

struct Mask {
    cells: Vec<Vec<bool>>,
    final_score: Vec<bool>,
}

fn mask(config: &GeneratorConfig, schema: &FeatureSchema, rows: &[Vec<f64>], rng: &mut Stream) -> Result<Mask> {
    let n = rows.len();
    let p = schema.len();
    let mut cells = vec![vec![false; p]; n];
    let mut final_score = vec![false; n];
    if config.missing_rate == 0.0 || n == 0 {
        return Ok(Mask { cells, final_score });
    }
    let (probs, driver): (Vec<f64>, Option<usize>) = match &config.mechanism {
        Mechanism::Mcar => (vec![config.missing_rate; n], None),
        Mechanism::Mar { driver } => {
            let d = schema
                .index_of(driver)
                .ok_or_else(|| Error::Generation(format!("MAR driver `{driver}` is not in the schema")))?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rows[a][d].total_cmp(&rows[b][d]).then(a.cmp(&b)));
            let mut probs = vec![0.0; n];
            let denom = (n.max(2) - 1) as f64;
            for (rank, &i) in order.iter().enumerate() {
                probs[i] = (2.0 * config.missing_rate * rank as f64 / denom).min(1.0);
            }
            (probs, Some(d))
        }
    };
    for i in 0..n {
        for j in 0..p {
            if Some(j) != driver && rng.random::<f64>() < probs[i] {
                cells[i][j] = true;
            }
        }
        final_score[i] = rng.random::<f64>() < probs[i];
    }
    Ok(Mask { cells, final_score })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_sums_to_one() {
        let s: f64 = credibility_marginal().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_series_is_exact_at_the_ends() {
        assert!(discretized_correlation(0.0).abs() < 1e-12);
        assert!((discretized_correlation(0.999) - 1.0).abs() < 0.01);
        let r = calibrate_latent_correlation(0.67);
        assert!((discretized_correlation(r) - 0.67).abs() < 1e-9);
        // discretization attenuates, so the latent value is a bit larger
        assert!(r > 0.67 && r < 0.70);
    }

    #[test]
    fn no_missingness_when_rate_is_zero() {
        let cfg = GeneratorConfig { missing_rate: 0.0, n_patients: 50, ..Default::default() };
        let c = generate(&cfg, &FeatureSchema::default_schema()).unwrap();
        assert_eq!(c.missing_count(), 0);
    }

    #[test]
    fn generated_outcomes_follow_drawn_scores() {
        let cfg = GeneratorConfig { missing_rate: 0.0, n_patients: 400, ..Default::default() };
        let c = generate(&cfg, &FeatureSchema::default_schema()).unwrap();
        assert!(c.outcome_issues().is_empty());
        assert!(c.response().iter().all(Option::is_some));
    }

    #[test]
    fn bad_bands_rejected() {
        let cfg = GeneratorConfig { response_probs: [0.5, 0.4, 0.7], ..Default::default() };
        assert!(matches!(generate(&cfg, &FeatureSchema::default_schema()), Err(Error::Generation(_))));
        let cfg = GeneratorConfig { missing_rate: 1.0, ..Default::default() };
        assert!(generate(&cfg, &FeatureSchema::default_schema()).is_err());
    }

    #[test]
    fn mechanism_parsing() {
        assert_eq!(Mechanism::parse("mcar").unwrap(), Mechanism::Mcar);
        assert_eq!(Mechanism::parse("mar:age").unwrap(), Mechanism::Mar { driver: "age".into() });
        assert!(Mechanism::parse("mnar").is_err());
    }

    #[test]
    fn planted_population_odds_ratio_below_one() {
        assert!(GeneratorConfig::default().population_odds_ratio_low() < 1.0);
    }
}
