use dualprice::estimators::{clip_probabilities, dr_pseudo_outcomes_with};
use dualprice::rng::Stream;
use dualprice::synthetic::{GroupRule, SIGMA_SWEEP};
use dualprice::{
    fit_outcome_models, fit_propensity, weighted_calibration, Adjustment, FeatureMap, ModelSpec,
    PropensitySpec, Scenario,
};
use proptest::prelude::*;

fn features(data: &dualprice::Dataset) -> FeatureMap {
    FeatureMap::covariates(data.feature_dim())
}

#[test]
fn fitting_is_deterministic() {
    let data = Scenario::quadratic(0.8).generate(3_000, 17).unwrap();
    let f = features(&data);
    let p = fit_propensity(&data, &PropensitySpec::logistic(), 0.01, &f).unwrap();
    for spec in [ModelSpec::Ols {}, ModelSpec::Lasso { alpha: 0.1 }, ModelSpec::Knn { k: None }, ModelSpec::tree()] {
        for adj in [Adjustment::Direct, Adjustment::Ipw, Adjustment::Dr] {
            let a = fit_outcome_models(&data, &spec, adj, Some(&p), &f).unwrap();
            let b = fit_outcome_models(&data, &spec, adj, Some(&p), &f).unwrap();
            assert_eq!(a, b, "{spec:?} {adj}");
        }
    }
    let q = fit_propensity(&data, &PropensitySpec::logistic(), 0.01, &f).unwrap();
    assert_eq!(p, q);
}

#[test]
fn lasso_without_penalty_matches_least_squares() {
    let data = Scenario::linear(1.0).generate(2_000, 5).unwrap();
    let f = features(&data);
    let ols = fit_outcome_models(&data, &ModelSpec::Ols {}, Adjustment::Direct, None, &f).unwrap();
    let lasso = fit_outcome_models(&data, &ModelSpec::Lasso { alpha: 0.0 }, Adjustment::Direct, None, &f).unwrap();
    let mut rng = Stream::new(9);
    for _ in 0..200 {
        let x = [3.0 * rng.normal(), 3.0 * rng.normal()];
        let a = ols.predict(&x, "all").unwrap();
        let b = lasso.predict(&x, "all").unwrap();
        for t in 0..3 {
            assert!((a[t] - b[t]).abs() <= 1e-6, "t={t}: {} vs {}", a[t], b[t]);
        }
    }
}

/// Mean and standard error of `values`.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn dr_pseudo_outcomes_are_unbiased_with_true_propensity() {
    let scenario = Scenario::linear(1.0);
    let data = scenario.generate(100_000, 23).unwrap();
    let rows = data.rows();
    let propensity = |i: usize| scenario.true_propensity(&rows[i].covariates).to_vec();
    let truth = |t: usize, i: usize| scenario.true_means(t, &rows[i].covariates).unwrap();
    // A correct mean model and a deliberately shifted one.
    let correct = dr_pseudo_outcomes_with(&data, truth, propensity);
    let wrong = dr_pseudo_outcomes_with(&data, |t, i| truth(t, i) + 0.7 * t as f64 - 0.3, propensity);
    for t in 0..3 {
        let target: Vec<f64> = (0..data.len()).map(|i| truth(t, i)).collect();
        for pseudo in [&correct[t], &wrong[t]] {
            let diff: Vec<f64> = pseudo.iter().zip(&target).map(|(p, m)| p - m).collect();
            let (mean, se) = mean_se(&diff);
            assert!(mean.abs() <= 3.0 * se, "t={t}: bias {mean} with se {se}");
        }
    }
}

#[test]
fn clipped_propensities_stay_on_the_floored_simplex() {
    let data = Scenario::linear(0.5).generate(4_000, 31).unwrap();
    let f = features(&data);
    let mut rng = Stream::new(8);
    for spec in [PropensitySpec::logistic(), PropensitySpec::tree()] {
        for floor in [0.01, 0.05, 0.2] {
            let model = fit_propensity(&data, &spec, floor, &f).unwrap();
            for _ in 0..500 {
                let x = [5.0 * rng.normal(), 5.0 * rng.normal()];
                let p = model.predict(&x, "all").unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{p:?}");
                assert!(p.iter().all(|v| *v >= floor - 1e-12), "{p:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn clip_preserves_mass_and_order(raw in prop::collection::vec(0.0f64..1.0, 2..6), floor in 0.001f64..0.15) {
        prop_assume!(raw.len() as f64 * floor < 1.0);
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let c = clip_probabilities(&p, floor);
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(c.iter().all(|v| *v >= floor - 1e-12));
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] < p[j] {
                    prop_assert!(c[i] <= c[j] + 1e-12);
                }
            }
        }
        if p.iter().all(|v| *v >= floor) {
            for (a, b) in p.iter().zip(&c) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn tree_propensity_recovers_the_region_probabilities() {
    let scenario = Scenario::linear(1.0);
    let data = scenario.generate(50_000, 41).unwrap();
    let f = features(&data);
    let model = fit_propensity(&data, &PropensitySpec::tree(), 0.01, &f).unwrap();
    // Average fitted probabilities over rows by true region.
    let mut sums = [[0.0; 3]; 3];
    let mut counts = [0usize; 3];
    for row in data.rows() {
        let truth = scenario.true_propensity(&row.covariates);
        let region = [[0.8, 0.1, 0.1], [0.6, 0.3, 0.1], [0.6, 0.1, 0.3]]
            .iter()
            .position(|r| *r == truth)
            .unwrap();
        let p = model.predict(&row.covariates, &row.group).unwrap();
        for t in 0..3 {
            sums[region][t] += p[t];
        }
        counts[region] += 1;
    }
    let expected = [[0.8, 0.1, 0.1], [0.6, 0.3, 0.1], [0.6, 0.1, 0.3]];
    for r in 0..3 {
        for t in 0..3 {
            let got = sums[r][t] / counts[r] as f64;
            assert!((got - expected[r][t]).abs() < 0.03, "region {r} t={t}: {got}");
        }
    }
}

#[test]
fn hajek_rates_are_weighted_means_within_bucket_range() {
    let data = Scenario::linear(1.0).generate(5_000, 77).unwrap();
    let f = features(&data);
    let p = fit_propensity(&data, &PropensitySpec::logistic(), 0.01, &f).unwrap();
    let models = fit_outcome_models(&data, &ModelSpec::Ols {}, Adjustment::Direct, None, &f).unwrap();
    for predictor in models.predictors() {
        let t = predictor.treatment;
        let curve = weighted_calibration(predictor, &data, &p, 10).unwrap();
        // Rebuild the buckets from scratch.
        let mut points: Vec<(f64, f64, f64)> = data
            .rows()
            .iter()
            .filter(|r| r.treatment == t)
            .map(|r| {
                let pred = predictor.predict(&r.covariates, &r.group).unwrap();
                let w = 1.0 / p.predict(&r.covariates, &r.group).unwrap()[t];
                (pred, w, r.outcome)
            })
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let n = points.len();
        assert_eq!(curve.buckets.iter().map(|b| b.count).sum::<usize>(), n);
        for (b, bucket) in curve.buckets.iter().enumerate() {
            let slice = &points[b * n / 10..(b + 1) * n / 10];
            let lo = slice.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
            let hi = slice.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
            assert!(bucket.hajek_outcome_rate >= lo && bucket.hajek_outcome_rate <= hi);
            let mass: f64 = slice.iter().map(|p| p.1).sum();
            let rate = slice.iter().map(|p| p.1 * p.2).sum::<f64>() / mass;
            assert!((rate - bucket.hajek_outcome_rate).abs() < 1e-9);
        }
    }
}

#[test]
fn synthetic_marginals() {
    // Region 0 of the linear scenario is the negative quadrant, so
    // P(T = 0) = 0.8/4 + 0.6·3/4. The quadratic scenario never lands there.
    for (scenario, p0) in [(Scenario::linear(0.5), 0.65), (Scenario::quadratic(0.5), 0.6)] {
        let n = 200_000;
        let data = scenario.generate(n, 99).unwrap();
        let share = data.rows().iter().filter(|r| r.treatment == 0).count() as f64 / n as f64;
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((share - p0).abs() <= 4.0 * se, "{share} vs {p0}");
    }
}

#[test]
fn synthetic_noise_is_independent_with_requested_scale() {
    let n = 100_000;
    for &sigma in &SIGMA_SWEEP {
        let scenario = Scenario::linear(sigma);
        let data = scenario.generate(n, 3).unwrap();
        let eps: Vec<[f64; 3]> = data
            .rows()
            .iter()
            .map(|r| {
                let y = r.potential_outcomes.as_ref().unwrap();
                [0, 1, 2].map(|t| y[t] - scenario.true_means(t, &r.covariates).unwrap())
            })
            .collect();
        for a in 0..3 {
            let var = eps.iter().map(|e| e[a] * e[a]).sum::<f64>() / n as f64;
            assert!((var.sqrt() / sigma - 1.0).abs() < 0.02, "σ={sigma}: sd {}", var.sqrt());
            for b in a + 1..3 {
                let cov = eps.iter().map(|e| e[a] * e[b]).sum::<f64>() / n as f64;
                assert!((cov / (sigma * sigma)).abs() < 0.02, "σ={sigma}: corr {}", cov / (sigma * sigma));
            }
        }
        let x_mean = data.rows().iter().map(|r| r.covariates[0]).sum::<f64>() / n as f64;
        assert!(x_mean.abs() < 0.02);
    }
}

#[test]
fn group_rule_does_not_move_other_draws() {
    let s = Scenario::linear(1.0);
    let a = s.generate(500, 4).unwrap();
    let rule = GroupRule::Threshold {
        feature: 1,
        cutoff: 0.0,
        below: "lo".into(),
        above: "hi".into(),
    };
    let b = s.generate_with_groups(500, 4, &rule).unwrap();
    for (x, y) in a.rows().iter().zip(b.rows()) {
        assert_eq!(x.covariates, y.covariates);
        assert_eq!(x.potential_outcomes, y.potential_outcomes);
        assert_eq!(x.treatment, y.treatment);
        assert_eq!(y.group, if y.covariates[1] > 0.0 { "hi" } else { "lo" });
    }
}
