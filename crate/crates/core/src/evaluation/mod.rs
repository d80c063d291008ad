//! Offline evaluation on held-out rows: capacity-capped realization of a
//! policy, the perfect-foresight benchmark, baselines and fairness reports.

mod fairness;
mod foresight;

use serde::{Deserialize, Serialize};

use crate::argmax_first;
use crate::data::Dataset;
use crate::dual::Capacities;
use crate::error::{Error, Result};
use crate::estimators::OutcomeModelSet;
use crate::policy::Policy;
use crate::rng::Stream;
use crate::synthetic::Scenario;

pub use fairness::{fairness_report, FairnessReport};
pub use foresight::{brute_force, perfect_foresight, perfect_foresight_with_caps};

/// Where the value of giving row `i` treatment `t` comes from.
#[derive(Debug, Clone, Copy)]
pub enum OutcomeSource<'a> {
    /// Known conditional means of a synthetic scenario.
    TrueMeans(Scenario),
    /// The rows' potential-outcome columns.
    PotentialOutcomes,
    /// Predictions of a fitted model set.
    Model(&'a OutcomeModelSet),
}

/// Row-major `n × (m+1)` outcome values for every row and treatment.
pub fn outcome_matrix(source: &OutcomeSource, data: &Dataset) -> Result<Vec<f64>> {
    let k = data.treatment_count();
    match source {
        OutcomeSource::TrueMeans(scenario) => {
            if k != crate::synthetic::TREATMENT_COUNT
                || data.feature_dim() != crate::synthetic::FEATURE_DIM
            {
                return Err(Error::MissingOutcome(
                    "true means need 2 covariates and 3 treatments".into(),
                ));
            }
            Ok(data
                .rows()
                .iter()
                .flat_map(|r| scenario.mean_vector(&r.covariates))
                .collect())
        }
        OutcomeSource::PotentialOutcomes => {
            let mut out = Vec::with_capacity(data.len() * k);
            for (i, r) in data.rows().iter().enumerate() {
                let p = r.potential_outcomes.as_ref().ok_or_else(|| {
                    Error::MissingOutcome(format!("row {i} has no potential outcomes"))
                })?;
                out.extend_from_slice(p);
            }
            Ok(out)
        }
        OutcomeSource::Model(models) => {
            if models.treatment_count() != k {
                return Err(Error::MissingOutcome(format!(
                    "model set covers {} treatments, data has {k}",
                    models.treatment_count()
                )));
            }
            models.predict_dataset(data)
        }
    }
}

/// Assign rows in order, each to the first argmax of its `scores` among the
/// treatments that still have capacity. Treatment 0 is never exhausted.
pub fn capped_assignment(scores: &[f64], caps: &[usize]) -> Vec<usize> {
    let k = caps.len();
    let mut remaining = caps.to_vec();
    let mut out = Vec::with_capacity(scores.len() / k);
    for row in scores.chunks_exact(k) {
        let mut best = 0;
        for t in 1..k {
            if remaining[t] > 0 && row[t] > row[best] {
                best = t;
            }
        }
        if best != 0 {
            remaining[best] -= 1;
        }
        out.push(best);
    }
    out
}

/// Mean of `values[i][assignment[i]]`.
pub fn mean_selected(values: &[f64], k: usize, assignment: &[usize]) -> f64 {
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &t)| values[i * k + t])
        .sum();
    total / assignment.len() as f64
}

/// Adjusted scores of `policy` for every row of `data`, row-major.
pub fn policy_scores(policy: &Policy, data: &Dataset) -> Result<Vec<f64>> {
    let k = policy.treatment_count();
    if k != data.treatment_count() {
        return Err(Error::dims("policy and data cover different treatments"));
    }
    let mut scores = policy.models().predict_dataset(data)?;
    for (row, chunk) in data.rows().iter().zip(scores.chunks_exact_mut(k)) {
        let adjusted = policy.adjust_predictions(chunk, &row.group)?;
        chunk.copy_from_slice(&adjusted);
    }
    Ok(scores)
}

/// The policy's capped assignment of `data` in arrival order.
pub fn policy_assignment(policy: &Policy, data: &Dataset, capacities: &Capacities) -> Result<Vec<usize>> {
    if capacities.len() != policy.treatment_count() {
        return Err(Error::dims("capacities and policy cover different treatments"));
    }
    let scores = policy_scores(policy, data)?;
    Ok(capped_assignment(&scores, &capacities.caps(data.len())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcomes {
    pub historical: f64,
    pub random: f64,
    pub no_treatment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub policy_outcome: f64,
    pub perfect_foresight_outcome: f64,
    /// `policy_outcome / perfect_foresight_outcome`; absent when the
    /// denominator is zero.
    pub ratio: Option<f64>,
    pub counts: Vec<usize>,
    pub rates: Vec<f64>,
    pub baselines: Option<BaselineOutcomes>,
}

impl EvalReport {
    fn from_assignment(assignment: &[usize], values: &[f64], k: usize, foresight: f64) -> Self {
        let n = assignment.len();
        let mut counts = vec![0usize; k];
        assignment.iter().for_each(|&t| counts[t] += 1);
        let policy_outcome = mean_selected(values, k, assignment);
        Self {
            n,
            policy_outcome,
            perfect_foresight_outcome: foresight,
            ratio: (foresight != 0.0).then(|| policy_outcome / foresight),
            rates: counts.iter().map(|&c| c as f64 / n as f64).collect(),
            counts,
            baselines: None,
        }
    }
}

/// Realize `policy` on `testset` with caps `⌊bᵗN⌋` and compare with the
/// perfect-foresight optimum and the historical, random and no-treatment
/// baselines (the random baseline draws from `random_seed`).
pub fn evaluate_policy(
    policy: &Policy,
    testset: &Dataset,
    source: &OutcomeSource,
    capacities: &Capacities,
    random_seed: u64,
) -> Result<EvalReport> {
    let k = capacities.len();
    let values = outcome_matrix(source, testset)?;
    let (_, foresight_total) = perfect_foresight(&values, capacities)?;
    let foresight = foresight_total / testset.len() as f64;
    let assignment = policy_assignment(policy, testset, capacities)?;
    let mut report = EvalReport::from_assignment(&assignment, &values, k, foresight);
    let run = |b: Baseline| -> Result<f64> {
        Ok(mean_selected(&values, k, &b.assignment(testset, capacities)?))
    };
    report.baselines = Some(BaselineOutcomes {
        historical: run(Baseline::Historical {})?,
        random: run(Baseline::Random { seed: random_seed })?,
        no_treatment: run(Baseline::NoTreatment {})?,
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Baseline {
    /// The treatments recorded in the data, uncapped.
    Historical {},
    /// Treatment `t ≠ 0` with probability `bᵗ`, else 0; an exhausted draw
    /// falls back to 0.
    Random { seed: u64 },
    NoTreatment {},
    Threshold(ThresholdRule),
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Historical {} => "historical",
            Baseline::Random { .. } => "random",
            Baseline::NoTreatment {} => "no_treatment",
            Baseline::Threshold(_) => "threshold",
        }
    }

    pub fn assignment(&self, data: &Dataset, capacities: &Capacities) -> Result<Vec<usize>> {
        let k = capacities.len();
        if data.treatment_count() != k {
            return Err(Error::dims("capacities and data cover different treatments"));
        }
        let caps = capacities.caps(data.len());
        Ok(match self {
            Baseline::Historical {} => data.rows().iter().map(|r| r.treatment).collect(),
            Baseline::NoTreatment {} => vec![0; data.len()],
            Baseline::Random { seed } => {
                let b = capacities.as_slice();
                let treated: f64 = b[1..].iter().sum();
                let mut probs = b.to_vec();
                if treated > 1.0 {
                    probs[0] = 0.0;
                    probs[1..].iter_mut().for_each(|p| *p /= treated);
                } else {
                    probs[0] = 1.0 - treated;
                }
                let mut stream = Stream::new(*seed);
                let mut remaining = caps;
                (0..data.len())
                    .map(|_| {
                        let t = stream.categorical(&probs);
                        if t != 0 && remaining[t] > 0 {
                            remaining[t] -= 1;
                            t
                        } else {
                            0
                        }
                    })
                    .collect()
            }
            Baseline::Threshold(rule) => rule.assignment(data, &caps)?,
        })
    }
}

/// Score-threshold stand-in for a needs-based triage rule: the highest
/// scores (one covariate column) receive `order[0]`, the next band
/// `order[1]`, and so on; the rest receive 0. Cutoffs are empirical
/// quantiles of the training scores at `1 − Σ` of the capacities of the
/// treatments at or above each band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRule {
    pub score_column: usize,
    pub order: Vec<usize>,
    pub cutoffs: Vec<f64>,
}

impl ThresholdRule {
    /// `order` defaults to the nonzero treatments from highest index down.
    pub fn learn(
        train: &Dataset,
        score_column: usize,
        capacities: &Capacities,
        order: Option<Vec<usize>>,
    ) -> Result<Self> {
        if score_column >= train.feature_dim() {
            return Err(Error::invalid(format!(
                "score column {score_column} missing (data has {} covariates)",
                train.feature_dim()
            )));
        }
        let k = capacities.len();
        let order = order.unwrap_or_else(|| (1..k).rev().collect());
        if order.iter().any(|&t| t == 0 || t >= k) {
            return Err(Error::invalid("threshold order must list treatments 1..=m"));
        }
        let mut scores: Vec<f64> = train.rows().iter().map(|r| r.covariates[score_column]).collect();
        scores.sort_by(f64::total_cmp);
        let b = capacities.as_slice();
        let mut mass = 0.0;
        let cutoffs = order
            .iter()
            .map(|&t| {
                mass += b[t];
                quantile(&scores, (1.0 - mass).clamp(0.0, 1.0))
            })
            .collect();
        Ok(Self {
            score_column,
            order,
            cutoffs,
        })
    }

    fn assignment(&self, data: &Dataset, caps: &[usize]) -> Result<Vec<usize>> {
        if self.score_column >= data.feature_dim() {
            return Err(Error::invalid("score column missing from data"));
        }
        let mut remaining = caps.to_vec();
        Ok(data
            .rows()
            .iter()
            .map(|r| {
                let s = r.covariates[self.score_column];
                let band = self.cutoffs.iter().position(|&c| s >= c);
                match band.map(|j| self.order[j]) {
                    Some(t) if t < remaining.len() && remaining[t] > 0 => {
                        remaining[t] -= 1;
                        t
                    }
                    _ => 0,
                }
            })
            .collect())
    }
}

/// Linear-interpolation quantile of sorted values.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Evaluate a baseline with the same outcome source and benchmark.
pub fn baseline(
    kind: &Baseline,
    testset: &Dataset,
    capacities: &Capacities,
    source: &OutcomeSource,
) -> Result<EvalReport> {
    let values = outcome_matrix(source, testset)?;
    let (_, foresight_total) = perfect_foresight(&values, capacities)?;
    let assignment = kind.assignment(testset, capacities)?;
    Ok(EvalReport::from_assignment(
        &assignment,
        &values,
        capacities.len(),
        foresight_total / testset.len() as f64,
    ))
}

/// First argmax over raw values, for callers that need the uncapped rule.
pub fn uncapped_assignment(scores: &[f64], k: usize) -> Vec<usize> {
    scores.chunks_exact(k).map(argmax_first).collect()
}
