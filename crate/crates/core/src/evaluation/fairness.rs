//! Group allocation rates, mean outcomes and their gaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dual::FairnessSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub group_sizes: BTreeMap<String, usize>,
    /// Per group, the share of its members assigned each treatment.
    pub allocation_rates: BTreeMap<String, Vec<f64>>,
    pub mean_outcomes: BTreeMap<String, f64>,
    /// Per treatment, the largest pairwise difference in allocation rates.
    pub max_allocation_gap: Vec<f64>,
    pub max_outcome_gap: f64,
    /// Parity kinds: every gap within δ. Absent otherwise.
    pub parity_satisfied: Option<bool>,
    /// Priority kinds: every minority rate (allocation, t ≠ 0) or mean outcome
    /// is at least that of every majority group. Absent otherwise.
    pub priority_satisfied: Option<bool>,
}

pub fn fairness_report(
    assignments: &[usize],
    outcomes: &[f64],
    groups: &[String],
    spec: &FairnessSpec,
    treatment_count: usize,
) -> Result<FairnessReport> {
    if assignments.len() != outcomes.len() || assignments.len() != groups.len() {
        return Err(Error::dims("assignments, outcomes and groups differ in length"));
    }
    if let Some(t) = assignments.iter().find(|&&t| t >= treatment_count) {
        return Err(Error::invalid(format!("assignment {t} out of range")));
    }
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for ((&t, &y), g) in assignments.iter().zip(outcomes).zip(groups) {
        *sizes.entry(g.clone()).or_default() += 1;
        counts.entry(g.clone()).or_insert_with(|| vec![0; treatment_count])[t] += 1;
        *sums.entry(g.clone()).or_default() += y;
    }
    let rates: BTreeMap<String, Vec<f64>> = counts
        .iter()
        .map(|(g, c)| (g.clone(), c.iter().map(|&v| v as f64 / sizes[g] as f64).collect()))
        .collect();
    let means: BTreeMap<String, f64> = sums
        .iter()
        .map(|(g, s)| (g.clone(), s / sizes[g] as f64))
        .collect();

    let spread = |values: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if hi >= lo { hi - lo } else { 0.0 }
    };
    let max_allocation_gap: Vec<f64> = (0..treatment_count)
        .map(|t| spread(&mut rates.values().map(|r| r[t])))
        .collect();
    let max_outcome_gap = spread(&mut means.values().copied());

    let check = |names: &[String]| -> Result<()> {
        match names.iter().find(|g| !sizes.contains_key(*g)) {
            Some(g) => Err(Error::InvalidFairness(format!("group {g:?} is absent from the data"))),
            None => Ok(()),
        }
    };
    let (parity_satisfied, priority_satisfied) = match spec {
        FairnessSpec::None {} => (None, None),
        FairnessSpec::AllocParity { delta } => {
            (Some(max_allocation_gap.iter().all(|g| g <= delta)), None)
        }
        FairnessSpec::OutcomeParity { delta } => (Some(max_outcome_gap <= *delta), None),
        FairnessSpec::AllocMinorityPriority { minority, majority } => {
            check(minority)?;
            check(majority)?;
            let ok = (1..treatment_count).all(|t| {
                minority
                    .iter()
                    .all(|a| majority.iter().all(|b| rates[a][t] >= rates[b][t]))
            });
            (None, Some(ok))
        }
        FairnessSpec::OutcomeMinorityPriority { minority, majority } => {
            check(minority)?;
            check(majority)?;
            let ok = minority
                .iter()
                .all(|a| majority.iter().all(|b| means[a] >= means[b]));
            (None, Some(ok))
        }
    };

    Ok(FairnessReport {
        group_sizes: sizes,
        allocation_rates: rates,
        mean_outcomes: means,
        max_allocation_gap,
        max_outcome_gap,
        parity_satisfied,
        priority_satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_assignments_have_no_gap() {
        let r = fairness_report(
            &[0, 1, 0, 1],
            &[0.0, 1.0, 0.0, 1.0],
            &groups(&["A", "A", "B", "B"]),
            &FairnessSpec::None {},
            2,
        )
        .unwrap();
        assert_eq!(r.max_allocation_gap, vec![0.0, 0.0]);
        assert_eq!(r.parity_satisfied, None);
        assert_eq!(r.priority_satisfied, None);
    }

    #[test]
    fn rate_gap_by_counting() {
        let r = fairness_report(
            &[1, 1, 1, 0],
            &[0.0; 4],
            &groups(&["A", "A", "B", "B"]),
            &FairnessSpec::AllocParity { delta: 0.1 },
            2,
        )
        .unwrap();
        assert_eq!(r.max_allocation_gap[1], 0.5);
        assert_eq!(r.parity_satisfied, Some(false));
    }

    #[test]
    fn absent_priority_group_is_an_error() {
        let spec = FairnessSpec::AllocMinorityPriority {
            minority: vec!["Z".into()],
            majority: vec!["A".into()],
        };
        assert!(fairness_report(&[0], &[0.0], &groups(&["A"]), &spec, 2).is_err());
    }
}
