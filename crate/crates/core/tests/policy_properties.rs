use dualprice::rng::Stream;
use dualprice::synthetic::GroupRule;
use dualprice::{
    fit_outcome_models, kkt_report, load_artifact, save_artifact, solve, Adjustment, Capacities,
    Dataset, Error, FairnessSpec, FeatureMap, Metadata, ModelSpec, Policy, PolicyArtifact,
    Scenario, ScoreMatrix, SolveOptions,
};

fn grouped_data(n: usize, seed: u64) -> Dataset {
    let rule = GroupRule::Threshold {
        feature: 0,
        cutoff: 0.5,
        below: "A".into(),
        above: "B".into(),
    };
    Scenario::linear(1.0).generate_with_groups(n, seed, &rule).unwrap()
}

fn fitted(data: &Dataset, fairness: &FairnessSpec) -> PolicyArtifact {
    let features = FeatureMap::covariates(data.feature_dim());
    let models = fit_outcome_models(data, &ModelSpec::Ols {}, Adjustment::Direct, None, &features).unwrap();
    let scores = ScoreMatrix::from_flat(models.predict_dataset(data).unwrap(), 3, data.groups()).unwrap();
    let caps = Capacities::new(vec![1.0, 0.1, 0.05]).unwrap();
    let dual = solve(&scores, &caps, fairness, &SolveOptions::default()).unwrap();
    PolicyArtifact::new(models, dual, caps, Metadata::new(Some(7), Some(data.fingerprint()))).unwrap()
}

#[test]
fn artifact_round_trip_preserves_every_assignment() {
    let data = grouped_data(2_000, 1);
    let dir = tempfile::tempdir().unwrap();
    for fairness in [
        FairnessSpec::None {},
        FairnessSpec::AllocParity { delta: 0.01 },
        FairnessSpec::OutcomeMinorityPriority {
            minority: vec!["B".into()],
            majority: vec!["A".into()],
        },
    ] {
        let artifact = fitted(&data, &fairness);
        let path = dir.path().join("policy.json");
        save_artifact(&artifact, &path).unwrap();
        let loaded = load_artifact(&path).unwrap();
        assert_eq!(loaded, artifact);

        let before = artifact.policy().unwrap();
        let after = loaded.policy().unwrap();
        let mut rng = Stream::new(12);
        for i in 0..1_000 {
            let x = [2.0 * rng.normal(), 2.0 * rng.normal()];
            let g = if i % 2 == 0 { "A" } else { "B" };
            assert_eq!(before.adjusted_scores(&x, g).unwrap(), after.adjusted_scores(&x, g).unwrap());
            assert_eq!(before.assign(&x, g).unwrap(), after.assign(&x, g).unwrap());
        }

        let again = dir.path().join("again.json");
        save_artifact(&loaded, &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn damaged_artifacts_are_rejected() {
    let data = grouped_data(500, 2);
    let artifact = fitted(&data, &FairnessSpec::None {});
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    save_artifact(&artifact, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_artifact(&cut), Err(Error::Parse(_))));

    let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let version = value["schema_version"].as_u64().unwrap();
    value["schema_version"] = (version + 1).into();
    let newer = dir.path().join("newer.json");
    std::fs::write(&newer, serde_json::to_vec(&value).unwrap()).unwrap();
    assert!(matches!(
        load_artifact(&newer),
        Err(Error::SchemaVersion { found, .. }) if found == version + 1
    ));

    let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    value["surprise"] = true.into();
    let extra = dir.path().join("extra.json");
    std::fs::write(&extra, serde_json::to_vec(&value).unwrap()).unwrap();
    assert!(matches!(load_artifact(&extra), Err(Error::Parse(_))));

    assert!(matches!(load_artifact(dir.path().join("missing.json")), Err(Error::Io(_))));
}

#[test]
fn common_shift_of_predictions_keeps_the_assignment() {
    let data = grouped_data(1_500, 3);
    let mut rng = Stream::new(4);
    for fairness in [
        FairnessSpec::None {},
        FairnessSpec::AllocMinorityPriority {
            minority: vec!["B".into()],
            majority: vec!["A".into()],
        },
        FairnessSpec::OutcomeMinorityPriority {
            minority: vec!["B".into()],
            majority: vec!["A".into()],
        },
    ] {
        let policy = fitted(&data, &fairness).policy().unwrap();
        for _ in 0..1_000 {
            let p: Vec<f64> = (0..3).map(|_| (rng.below(256) as f64 - 128.0) / 64.0).collect();
            let c = rng.below(8) as f64 - 4.0;
            let shifted: Vec<f64> = p.iter().map(|v| v + c).collect();
            for g in ["A", "B"] {
                let a = dualprice::argmax_first(&policy.adjust_predictions(&p, g).unwrap());
                let b = dualprice::argmax_first(&policy.adjust_predictions(&shifted, g).unwrap());
                let adjusted = policy.adjust_predictions(&p, g).unwrap();
                let best = adjusted[a];
                // Only a near tie may flip.
                if a != b {
                    assert!((adjusted[b] - best).abs() < 1e-9, "{fairness:?} {p:?} + {c}");
                }
            }
        }
    }
}

#[test]
fn unconstrained_policy_ignores_group_labels() {
    let data = grouped_data(1_000, 5);
    let policy = fitted(&data, &FairnessSpec::None {}).policy().unwrap();
    let mut rng = Stream::new(6);
    for _ in 0..1_000 {
        let x = [2.0 * rng.normal(), 2.0 * rng.normal()];
        let t = policy.assign(&x, "A").unwrap();
        assert_eq!(policy.assign(&x, "B").unwrap(), t);
        assert_eq!(policy.assign(&x, "never seen").unwrap(), t);
    }
    let fair = fitted(&data, &FairnessSpec::AllocParity { delta: 0.01 }).policy().unwrap();
    assert!(matches!(fair.assign(&[0.0, 0.0], "C"), Err(Error::UnknownGroup(_))));
}

#[test]
fn in_sample_policy_rates_match_the_kkt_report() {
    let data = grouped_data(3_000, 8);
    for fairness in [
        FairnessSpec::None {},
        FairnessSpec::AllocParity { delta: 0.02 },
        FairnessSpec::OutcomeMinorityPriority {
            minority: vec!["B".into()],
            majority: vec!["A".into()],
        },
    ] {
        let artifact = fitted(&data, &fairness);
        let policy: Policy = artifact.policy().unwrap();
        let scores =
            ScoreMatrix::from_flat(artifact.models.predict_dataset(&data).unwrap(), 3, data.groups()).unwrap();
        let report = kkt_report(&scores, &artifact.capacities, &fairness, &artifact.dual).unwrap();
        let mut counts = [0usize; 3];
        for row in data.rows() {
            counts[policy.assign(&row.covariates, &row.group).unwrap()] += 1;
        }
        for t in 0..3 {
            assert_eq!(report.treatments[t].rate, counts[t] as f64 / data.len() as f64, "{fairness:?}");
        }
    }
}
