//! Shared fixtures for the criterion benches.

use dualprice::{Capacities, Dataset, Scenario, ScenarioKind, ScoreMatrix};

/// Synthetic dataset with potential outcomes and two groups split at x0 = 0.
pub fn dataset(n: usize, seed: u64) -> Dataset {
    let data = Scenario::new(ScenarioKind::Linear, 1.0)
        .and_then(|s| s.generate(n, seed))
        .expect("synthetic data");
    data.relabel_groups(|_, row| if row.covariates[0] < 0.0 { "A".into() } else { "B".into() })
        .expect("relabel")
}

/// Scores are the true potential outcomes of `data`.
pub fn scores(data: &Dataset) -> ScoreMatrix {
    let rows = data
        .rows()
        .iter()
        .map(|r| r.potential_outcomes.clone().expect("potential outcomes"))
        .collect();
    ScoreMatrix::new(rows, data.groups()).expect("score matrix")
}

pub fn capacities() -> Capacities {
    Capacities::new(vec![1.0, 0.1, 0.05]).expect("capacities")
}
