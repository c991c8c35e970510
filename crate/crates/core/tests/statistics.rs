mod common;

use credence::dataset::{FeatureSchema, Outcome};
use credence::impute::{impute_many, ImputeOptions};
use credence::interpret::{cohort_contingency, Direction};
use credence::synthgen::{generate, generate_with_truth, GeneratorConfig, Mechanism};

/// Chi-square critical value, one degree of freedom, alpha = 0.001.
const CHI2_CRIT_DF1_0001: f64 = 10.828;

fn complete_cohort(n: usize, seed: u64) -> credence::dataset::Cohort {
    let cfg = GeneratorConfig { n_patients: n, missing_rate: 0.0, seed, ..Default::default() };
    generate(&cfg, &FeatureSchema::default_schema()).unwrap()
}

#[test]
fn mcar_imputation_is_calibrated() {
    let schema = FeatureSchema::default_schema();
    for seed in 0..3 {
        let complete = complete_cohort(500, seed);
        for name in ["urica", "qids", "credibility"] {
            let j = schema.index_of(name).unwrap();
            let masked = common::mcar_delete(&complete, j, 0.2, seed);
            let imputed = impute_many(&masked, 50, seed, &ImputeOptions::default()).unwrap();
            let truth: f64 = complete.column(j).iter().map(|v| v.unwrap()).sum::<f64>() / 500.0;
            let (pooled, se) = common::pooled_mean(&imputed, j);
            assert!((pooled - truth).abs() <= 3.0 * se, "{name} seed {seed}: {pooled} vs {truth} (se {se})");
            assert!(common::min_between_variance(&masked, &imputed, j) > 0.0, "{name} seed {seed}");
        }
    }
}

#[test]
fn observed_cells_survive_imputation() {
    let cfg = GeneratorConfig { n_patients: 120, seed: 6, ..Default::default() };
    let cohort = generate(&cfg, &FeatureSchema::default_schema()).unwrap();
    let imputed = impute_many(&cohort, 4, 6, &ImputeOptions::default()).unwrap();
    let kinds = cohort.schema().kinds();
    for imp in &imputed {
        for i in 0..cohort.n_patients() {
            for j in 0..cohort.n_features() {
                let v = imp.completed_values.get(i, j);
                assert!(v.is_finite());
                if let Some(obs) = cohort.value(i, j) {
                    assert_eq!(v, obs);
                }
                if kinds[j].is_discrete() {
                    assert_eq!(v, v.round());
                }
                if let Some((lo, hi)) = cohort.schema().feature(j).effective_bounds() {
                    assert!((lo..=hi).contains(&v));
                }
            }
        }
    }
}

#[test]
fn generated_correlation_hits_target() {
    let schema = FeatureSchema::default_schema();
    let (c, e) = (schema.index_of("credibility").unwrap(), schema.index_of("expectancy").unwrap());
    for seed in 0..3 {
        let cohort = generate(&GeneratorConfig { n_patients: 5000, seed, ..Default::default() }, &schema).unwrap();
        let pairs: Vec<(f64, f64)> =
            (0..5000).filter_map(|i| Some((cohort.value(i, c)?, cohort.value(i, e)?))).collect();
        let r = common::pearson(&pairs);
        assert!((r - 0.67).abs() <= 0.04, "seed {seed}: r = {r}");
    }
}

#[test]
fn top_band_response_rate_matches() {
    let schema = FeatureSchema::default_schema();
    let c = schema.index_of("credibility").unwrap();
    for seed in 0..3 {
        let cfg = GeneratorConfig { n_patients: 5000, missing_rate: 0.0, seed, ..Default::default() };
        let (_, truth) = generate_with_truth(&cfg, &schema).unwrap();
        let top: Vec<bool> =
            (0..5000).filter(|&i| truth.value(i, c).unwrap() > 22.0).map(|i| truth.response()[i].unwrap()).collect();
        let rate = top.iter().filter(|&&r| r).count() as f64 / top.len() as f64;
        assert!((rate - cfg.response_probs[2]).abs() <= 0.03, "seed {seed}: {rate} over {}", top.len());
    }
}

#[test]
fn credibility_stays_on_its_integer_scale() {
    let schema = FeatureSchema::default_schema();
    let c = schema.index_of("credibility").unwrap();
    for seed in 0..20 {
        let cohort = generate(&GeneratorConfig { n_patients: 400, seed, ..Default::default() }, &schema).unwrap();
        for v in cohort.column(c).into_iter().flatten() {
            assert!((3.0..=27.0).contains(&v) && v == v.round(), "{v}");
        }
    }
}

#[test]
fn mcar_missingness_is_independent_of_values() {
    let schema = FeatureSchema::default_schema();
    let (age, cred) = (schema.index_of("age").unwrap(), schema.index_of("credibility").unwrap());
    let mut rejections = 0;
    for seed in 0..100 {
        let cfg = GeneratorConfig { n_patients: 2000, missing_rate: 0.2, seed, ..Default::default() };
        let (observed, truth) = generate_with_truth(&cfg, &schema).unwrap();
        // missingness of age against the true credibility split at 17
        let mut t = [0.0f64; 4];
        for i in 0..2000 {
            let high = truth.value(i, cred).unwrap() > 17.0;
            let missing = observed.is_missing(i, age);
            t[usize::from(high) * 2 + usize::from(missing)] += 1.0;
        }
        if common::chi_square_2x2(t[0], t[1], t[2], t[3]) > CHI2_CRIT_DF1_0001 {
            rejections += 1;
        }
    }
    // expected 0.1 rejections at this alpha
    assert!(rejections <= 1, "{rejections} of 100 seeds rejected independence");
}

#[test]
fn mar_missingness_rises_with_the_driver() {
    let schema = FeatureSchema::default_schema();
    let (age, qids) = (schema.index_of("age").unwrap(), schema.index_of("qids").unwrap());
    let cfg = GeneratorConfig {
        n_patients: 3000,
        missing_rate: 0.2,
        mechanism: Mechanism::Mar { driver: "age".into() },
        seed: 1,
        ..Default::default()
    };
    let cohort = generate(&cfg, &schema).unwrap();
    assert!((0..3000).all(|i| !cohort.is_missing(i, age)));
    let mut by_age: Vec<(f64, bool)> = (0..3000).map(|i| (cohort.value(i, age).unwrap(), cohort.is_missing(i, qids))).collect();
    by_age.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rate = |s: &[(f64, bool)]| s.iter().filter(|p| p.1).count() as f64 / s.len() as f64;
    let (young, old) = by_age.split_at(1500);
    assert!(rate(old) > rate(young) + 0.1, "{} vs {}", rate(young), rate(old));
    assert!((rate(&by_age) - 0.2).abs() < 0.03);
}

#[test]
fn low_band_response_proportion_within_three_sigma() {
    let schema = FeatureSchema::default_schema();
    let c = schema.index_of("credibility").unwrap();
    for seed in 0..20 {
        let cohort = generate(&GeneratorConfig { n_patients: 300, seed, ..Default::default() }, &schema).unwrap();
        let t = cohort_contingency(&cohort, c, 16.0, Direction::AtMost, Outcome::Response);
        let n = (t.exposed_pos + t.exposed_neg) as f64;
        let p = t.exposed_pos as f64 / n;
        let sigma = (0.15 * 0.85 / n).sqrt();
        assert!((p - 0.15).abs() <= 3.0 * sigma, "seed {seed}: {p} over {n}");
    }
}

#[test]
fn planted_population_odds_ratios_have_the_right_signs() {
    let cfg = GeneratorConfig::default();
    assert!(cfg.population_odds_ratio_low() < 1.0);
    // top band against a marginal-weighted mix of the two lower bands
    let [low, mid, high] = cfg.response_probs;
    let probs = credence::synthgen::credibility_marginal();
    let (mut w, mut r) = (0.0, 0.0);
    for (v, p) in (3..=22).zip(&probs) {
        w += p;
        r += p * if v <= 16 { low } else { mid };
    }
    let rest = r / w;
    assert!((high / (1.0 - high)) / (rest / (1.0 - rest)) > 1.0);
}
