//! The sample dual problem and its fairness-constrained variants.
//!
//! With scores `s_it = m̂ᵗ(xᵢ)` and capacities `b`, the unconstrained dual is
//!
//! ```text
//! F(μ) = (1/n) Σᵢ maxₜ (s_it − μₜ) + Σₜ μₜ bₜ,    μ₀ = 0, μ ≥ 0.
//! ```
//!
//! Allocation-fairness kinds subtract `(n/n_g) γₜ(g)` inside the max and
//! outcome-fairness kinds scale the score by `1 − (n/n_g) γ(g)`, where
//! `γ(g) = Σ_{pairs (g,·)} λ − Σ_{pairs (·,g)} λ`; parity kinds add `δ Σ λ`.
//! [`PriceAdjuster`] holds the per-group transformation and is shared by the
//! solver, the KKT report and the deployed policy.

mod kelley;
mod kkt;
mod oracle;
pub(crate) mod simplex;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::argmax_first;
use crate::error::{Error, Result};

pub use kelley::{solve, SolveOptions};
pub use kkt::{kkt_report, ConstraintKkt, KktReport, TreatmentKkt};
pub use oracle::oracle_solve;

pub const DEFAULT_DELTA: f64 = 0.01;

/// Scores `m̂ᵗ(xᵢ)` on a sample, with group membership.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Vec<f64>,
    n: usize,
    k: usize,
    group_ids: Vec<usize>,
    group_names: Vec<String>,
    group_counts: Vec<usize>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>, groups: Vec<String>) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::dims("score rows have different lengths"));
        }
        Self::from_flat(rows.concat(), k, groups)
    }

    /// Row-major `n × k` values.
    pub fn from_flat(values: Vec<f64>, k: usize, groups: Vec<String>) -> Result<Self> {
        if k == 0 || values.is_empty() {
            return Err(Error::invalid("score matrix needs at least one row and column"));
        }
        if values.len() % k != 0 {
            return Err(Error::dims("score values are not a multiple of the width"));
        }
        let n = values.len() / k;
        if groups.len() != n {
            return Err(Error::dims(format!(
                "{} group labels for {n} score rows",
                groups.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / k,
                treatment: pos % k,
            });
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &groups {
            *counts.entry(g.as_str()).or_default() += 1;
        }
        let group_names: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
        let group_counts: Vec<usize> = counts.values().copied().collect();
        let group_ids = groups
            .iter()
            .map(|g| group_names.binary_search(g).expect("group collected above"))
            .collect();
        Ok(Self {
            values,
            n,
            k,
            group_ids,
            group_names,
            group_counts,
        })
    }

    /// Single-group matrix.
    pub fn ungrouped(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        Self::new(rows, vec!["all".to_string(); n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of treatments, `m + 1`.
    pub fn width(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn group_id(&self, i: usize) -> usize {
        self.group_ids[i]
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_counts(&self) -> BTreeMap<String, usize> {
        self.group_names
            .iter()
            .cloned()
            .zip(self.group_counts.iter().copied())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy with every score mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        if let Some(pos) = out.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / self.k,
                treatment: pos % self.k,
            });
        }
        Ok(out)
    }
}

/// Per-individual capacities `b`, with `b₀ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Capacities(Vec<f64>);

impl Capacities {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::invalid("capacity vector is empty"));
        }
        if b[0] != 1.0 {
            return Err(Error::invalid(format!("b⁰ must equal 1, got {}", b[0])));
        }
        if let Some(v) = b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("capacity {v} outside [0, 1]")));
        }
        Ok(Self(b))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Integer caps `⌊bᵗ N⌋`, with `cap⁰ = N`.
    pub fn caps(&self, n: usize) -> Vec<usize> {
        let mut caps: Vec<usize> = self
            .0
            .iter()
            .map(|b| (b * n as f64 + 1e-9).floor() as usize)
            .collect();
        caps[0] = n;
        caps
    }
}

impl TryFrom<Vec<f64>> for Capacities {
    type Error = Error;

    fn try_from(b: Vec<f64>) -> Result<Self> {
        Self::new(b)
    }
}

impl From<Capacities> for Vec<f64> {
    fn from(c: Capacities) -> Self {
        c.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FairnessKind {
    None,
    AllocParity,
    AllocMinorityPriority,
    OutcomeParity,
    OutcomeMinorityPriority,
}

impl FairnessKind {
    pub fn is_allocation(self) -> bool {
        matches!(self, Self::AllocParity | Self::AllocMinorityPriority)
    }

    pub fn is_outcome(self) -> bool {
        matches!(self, Self::OutcomeParity | Self::OutcomeMinorityPriority)
    }
}

impl fmt::Display for FairnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::AllocParity => "alloc_parity",
            Self::AllocMinorityPriority => "alloc_minority_priority",
            Self::OutcomeParity => "outcome_parity",
            Self::OutcomeMinorityPriority => "outcome_minority_priority",
        })
    }
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FairnessSpec {
    None {},
    AllocParity {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    AllocMinorityPriority {
        minority: Vec<String>,
        majority: Vec<String>,
    },
    OutcomeParity {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    OutcomeMinorityPriority {
        minority: Vec<String>,
        majority: Vec<String>,
    },
}

impl Default for FairnessSpec {
    fn default() -> Self {
        Self::None {}
    }
}

impl FairnessSpec {
    pub fn kind(&self) -> FairnessKind {
        match self {
            Self::None {} => FairnessKind::None,
            Self::AllocParity { .. } => FairnessKind::AllocParity,
            Self::AllocMinorityPriority { .. } => FairnessKind::AllocMinorityPriority,
            Self::OutcomeParity { .. } => FairnessKind::OutcomeParity,
            Self::OutcomeMinorityPriority { .. } => FairnessKind::OutcomeMinorityPriority,
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            Self::AllocParity { delta } | Self::OutcomeParity { delta } => *delta,
            _ => 0.0,
        }
    }

    /// Constraint pairs `(t, g, g′)` over the sorted group list `groups`.
    pub(crate) fn constraints(&self, groups: &[String], k: usize) -> Result<Vec<Constraint>> {
        let index = |name: &String| {
            groups.binary_search(name).map_err(|_| {
                Error::InvalidFairness(format!("group {name:?} is absent from the data"))
            })
        };
        let sides = |minority: &[String], majority: &[String]| -> Result<(Vec<usize>, Vec<usize>)> {
            if minority.is_empty() || majority.is_empty() {
                return Err(Error::InvalidFairness(
                    "minority and majority sets must be nonempty".into(),
                ));
            }
            let mut min: Vec<usize> = minority.iter().map(index).collect::<Result<_>>()?;
            let mut maj: Vec<usize> = majority.iter().map(index).collect::<Result<_>>()?;
            min.sort_unstable();
            min.dedup();
            maj.sort_unstable();
            maj.dedup();
            if min.iter().any(|g| maj.contains(g)) {
                return Err(Error::InvalidFairness(
                    "minority and majority sets overlap".into(),
                ));
            }
            if min.len() + maj.len() != groups.len() {
                return Err(Error::InvalidFairness(
                    "minority and majority sets must cover every group in the data".into(),
                ));
            }
            Ok((min, maj))
        };
        let delta = self.delta();
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidFairness(format!("delta must be ≥ 0, got {delta}")));
        }
        let g = groups.len();
        let ordered_pairs = || {
            (0..g).flat_map(move |a| (0..g).filter(move |&b| b != a).map(move |b| (a, b)))
        };
        let out = match self {
            Self::None {} => Vec::new(),
            Self::AllocParity { .. } => (0..k)
                .flat_map(|t| ordered_pairs().map(move |(a, b)| Constraint { t: Some(t), a, b }))
                .collect(),
            Self::OutcomeParity { .. } => ordered_pairs()
                .map(|(a, b)| Constraint { t: None, a, b })
                .collect(),
            Self::AllocMinorityPriority { minority, majority } => {
                let (min, maj) = sides(minority, majority)?;
                let mut out = Vec::new();
                for t in 1..k {
                    for &a in &maj {
                        for &b in &min {
                            out.push(Constraint { t: Some(t), a, b });
                        }
                    }
                }
                out
            }
            Self::OutcomeMinorityPriority { minority, majority } => {
                let (min, maj) = sides(minority, majority)?;
                maj.iter()
                    .flat_map(|&a| min.iter().map(move |&b| Constraint { t: None, a, b }))
                    .collect()
            }
        };
        Ok(out)
    }
}

/// One fairness constraint: the rate (or mean outcome) of group `a` minus
/// that of group `b` is at most δ, for treatment `t` when allocation-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Constraint {
    pub t: Option<usize>,
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEntry {
    pub t: Option<usize>,
    pub g: String,
    pub g_prime: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub mu: Vec<f64>,
    pub lambda: Vec<LambdaEntry>,
    pub objective: f64,
    pub gap_bound: f64,
    pub group_counts: BTreeMap<String, usize>,
    pub fairness: FairnessSpec,
    #[serde(default)]
    pub iterations: usize,
}

impl DualSolution {
    /// The scoring transformation defined by this solution.
    pub fn adjuster(&self) -> Result<PriceAdjuster> {
        let names: Vec<String> = self.group_counts.keys().cloned().collect();
        let counts: Vec<usize> = self.group_counts.values().copied().collect();
        let index = |name: &String| {
            names
                .binary_search(name)
                .map_err(|_| Error::UnknownGroup(name.clone()))
        };
        let terms = self
            .lambda
            .iter()
            .map(|e| Ok((e.t, index(&e.g)?, index(&e.g_prime)?, e.value)))
            .collect::<Result<Vec<_>>>()?;
        PriceAdjuster::new(self.fairness.kind(), &self.mu, &terms, names, &counts)
    }
}

/// Maps raw scores of an individual in group `g` to the adjusted scores whose
/// first argmax is the assigned treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceAdjuster {
    kind: FairnessKind,
    mu: Vec<f64>,
    group_names: Vec<String>,
    // Allocation kinds: per group, per t, the subtracted (n/n_g) γₜ(g).
    // Outcome kinds: per group, a single factor 1 − (n/n_g) γ(g).
    per_group: Vec<Vec<f64>>,
}

impl PriceAdjuster {
    pub(crate) fn new(
        kind: FairnessKind,
        mu: &[f64],
        terms: &[(Option<usize>, usize, usize, f64)],
        group_names: Vec<String>,
        group_counts: &[usize],
    ) -> Result<Self> {
        let k = mu.len();
        if k == 0 || mu[0] != 0.0 {
            return Err(Error::invalid("μ must be nonempty with μ⁰ = 0"));
        }
        let n: usize = group_counts.iter().sum();
        let gn = group_names.len();
        let per_group = match kind {
            FairnessKind::None => Vec::new(),
            FairnessKind::AllocParity | FairnessKind::AllocMinorityPriority => {
                let mut gamma = vec![vec![0.0; k]; gn];
                for &(t, a, b, v) in terms {
                    let t = t.filter(|&t| t < k).ok_or_else(|| {
                        Error::dims("allocation multiplier without a valid treatment index")
                    })?;
                    gamma[a][t] += v;
                    gamma[b][t] -= v;
                }
                for (g, row) in gamma.iter_mut().enumerate() {
                    let scale = n as f64 / group_counts[g] as f64;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                gamma
            }
            FairnessKind::OutcomeParity | FairnessKind::OutcomeMinorityPriority => {
                let mut gamma = vec![0.0; gn];
                for &(t, a, b, v) in terms {
                    if t.is_some() {
                        return Err(Error::dims("outcome multiplier carries a treatment index"));
                    }
                    gamma[a] += v;
                    gamma[b] -= v;
                }
                gamma
                    .iter()
                    .enumerate()
                    .map(|(g, gm)| vec![1.0 - n as f64 / group_counts[g] as f64 * gm])
                    .collect()
            }
        };
        Ok(Self {
            kind,
            mu: mu.to_vec(),
            group_names,
            per_group,
        })
    }

    pub fn kind(&self) -> FairnessKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.mu.len()
    }

    /// Group index for a label; any label is accepted when fairness is off.
    pub fn group_index(&self, group: &str) -> Result<Option<usize>> {
        if self.kind == FairnessKind::None {
            return Ok(None);
        }
        self.group_names
            .binary_search_by(|g| g.as_str().cmp(group))
            .map(Some)
            .map_err(|_| Error::UnknownGroup(group.to_string()))
    }

    /// Write adjusted scores for raw `scores` into `out`.
    #[inline]
    pub fn adjust_into(&self, scores: &[f64], group: Option<usize>, out: &mut [f64]) {
        match (self.kind, group) {
            (FairnessKind::None, _) | (_, None) => {
                for t in 0..scores.len() {
                    out[t] = scores[t] - self.mu[t];
                }
            }
            (kind, Some(g)) if kind.is_allocation() => {
                let shift = &self.per_group[g];
                for t in 0..scores.len() {
                    out[t] = scores[t] - self.mu[t] - shift[t];
                }
            }
            (_, Some(g)) => {
                let factor = self.per_group[g][0];
                for t in 0..scores.len() {
                    out[t] = scores[t] * factor - self.mu[t];
                }
            }
        }
    }

    pub fn adjust(&self, scores: &[f64], group: Option<usize>) -> Vec<f64> {
        let mut out = vec![0.0; scores.len()];
        self.adjust_into(scores, group, &mut out);
        out
    }

    pub fn assign(&self, scores: &[f64], group: Option<usize>) -> usize {
        argmax_first(&self.adjust(scores, group))
    }
}

/// A solver-ready instance: scores, capacities and the constraint layout.
/// Decision vector `x = (μ₁, …, μ_m, λ₁, …, λ_L)`.
pub(crate) struct Problem<'a> {
    pub scores: &'a ScoreMatrix,
    pub b: &'a [f64],
    pub spec: &'a FairnessSpec,
    pub kind: FairnessKind,
    pub delta: f64,
    pub constraints: Vec<Constraint>,
}

impl<'a> Problem<'a> {
    pub fn new(scores: &'a ScoreMatrix, b: &'a Capacities, spec: &'a FairnessSpec) -> Result<Self> {
        if b.len() != scores.width() {
            return Err(Error::dims(format!(
                "{} capacities for {} treatments",
                b.len(),
                scores.width()
            )));
        }
        let constraints = spec.constraints(scores.group_names(), scores.width())?;
        Ok(Self {
            scores,
            b: b.as_slice(),
            spec,
            kind: spec.kind(),
            delta: spec.delta(),
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.scores.width() - 1 + self.constraints.len()
    }

    pub fn mu(&self, x: &[f64]) -> Vec<f64> {
        let mut mu = Vec::with_capacity(self.scores.width());
        mu.push(0.0);
        mu.extend_from_slice(&x[..self.scores.width() - 1]);
        mu
    }

    pub fn adjuster(&self, x: &[f64]) -> PriceAdjuster {
        let m = self.scores.width() - 1;
        let terms: Vec<_> = self
            .constraints
            .iter()
            .zip(&x[m..])
            .map(|(c, &v)| (c.t, c.a, c.b, v))
            .collect();
        PriceAdjuster::new(
            self.kind,
            &self.mu(x),
            &terms,
            self.scores.group_names().to_vec(),
            &self.scores.group_counts,
        )
        .expect("layout built from the same problem")
    }

    /// Objective value, a subgradient, and the induced assignment counts.
    pub fn evaluate(&self, x: &[f64]) -> Evaluation {
        let s = self.scores;
        let (n, k) = (s.n(), s.width());
        let adjuster = self.adjuster(x);
        let grouped = self.kind != FairnessKind::None;
        let gn = s.group_names().len();
        let mut counts = vec![0usize; k];
        let mut group_counts = vec![vec![0usize; k]; if grouped { gn } else { 0 }];
        let mut group_outcome = vec![0.0; if grouped { gn } else { 0 }];
        let mut buf = vec![0.0; k];
        let mut total = 0.0;
        for i in 0..n {
            let g = grouped.then(|| s.group_id(i));
            let row = s.row(i);
            adjuster.adjust_into(row, g, &mut buf);
            let t = argmax_first(&buf);
            total += buf[t];
            counts[t] += 1;
            if let Some(g) = g {
                group_counts[g][t] += 1;
                group_outcome[g] += row[t];
            }
        }
        let m = k - 1;
        let mut value = total / n as f64;
        let mut grad = Vec::with_capacity(x.len());
        for t in 1..k {
            value += x[t - 1] * self.b[t];
            grad.push(self.b[t] - counts[t] as f64 / n as f64);
        }
        let nc = &s.group_counts;
        for (c, &lam) in self.constraints.iter().zip(&x[m..]) {
            value += self.delta * lam;
            let gap = match c.t {
                Some(t) => {
                    group_counts[c.a][t] as f64 / nc[c.a] as f64
                        - group_counts[c.b][t] as f64 / nc[c.b] as f64
                }
                None => group_outcome[c.a] / nc[c.a] as f64 - group_outcome[c.b] / nc[c.b] as f64,
            };
            grad.push(self.delta - gap);
        }
        Evaluation {
            value,
            grad,
            counts,
        }
    }

    pub fn solution(&self, x: &[f64], objective: f64, gap_bound: f64, iterations: usize) -> DualSolution {
        let m = self.scores.width() - 1;
        let names = self.scores.group_names();
        DualSolution {
            mu: self.mu(x),
            lambda: self
                .constraints
                .iter()
                .zip(&x[m..])
                .map(|(c, &value)| LambdaEntry {
                    t: c.t,
                    g: names[c.a].clone(),
                    g_prime: names[c.b].clone(),
                    value,
                })
                .collect(),
            objective,
            gap_bound,
            group_counts: self.scores.group_counts(),
            fairness: self.spec.clone(),
            iterations,
        }
    }

    /// Decision vector for a given `(μ, λ)`.
    pub fn point(&self, mu: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        let k = self.scores.width();
        if mu.len() != k || lambda.len() != self.constraints.len() {
            return Err(Error::dims(format!(
                "expected μ of length {k} and λ of length {}, got {} and {}",
                self.constraints.len(),
                mu.len(),
                lambda.len()
            )));
        }
        if mu[0] != 0.0 {
            return Err(Error::invalid("μ⁰ must be 0"));
        }
        let mut x = mu[1..].to_vec();
        x.extend_from_slice(lambda);
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Exact dual objective at `(μ, λ)`; `lambda` follows the constraint order
/// reported in [`DualSolution::lambda`].
pub fn dual_objective(
    scores: &ScoreMatrix,
    b: &Capacities,
    spec: &FairnessSpec,
    mu: &[f64],
    lambda: &[f64],
) -> Result<f64> {
    let problem = Problem::new(scores, b, spec)?;
    let x = problem.point(mu, lambda)?;
    Ok(problem.evaluate(&x).value)
}

/// The constraint order used for `λ`, as `(t, g, g′)` triples.
pub fn constraint_layout(
    scores: &ScoreMatrix,
    spec: &FairnessSpec,
) -> Result<Vec<(Option<usize>, String, String)>> {
    let names = scores.group_names();
    Ok(spec
        .constraints(names, scores.width())?
        .into_iter()
        .map(|c| (c.t, names[c.a].clone(), names[c.b].clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example_a() -> (ScoreMatrix, Capacities) {
        let rows = (1..=4).map(|v| vec![0.0, v as f64]).collect();
        (
            ScoreMatrix::ungrouped(rows).unwrap(),
            Capacities::new(vec![1.0, 0.25]).unwrap(),
        )
    }

    #[test]
    fn example_a_objective_by_hand() {
        let (s, b) = example_a();
        // Positive parts at μ¹ = 3: 0, 0, 0, 1.
        let v = dual_objective(&s, &b, &FairnessSpec::None {}, &[0.0, 3.0], &[]).unwrap();
        assert_eq!(v, 0.25 + 0.75);
    }

    #[test]
    fn zero_price_is_mean_row_max() {
        let s = ScoreMatrix::ungrouped(vec![vec![0.2, -1.0], vec![0.1, 0.7]]).unwrap();
        let b = Capacities::new(vec![1.0, 0.5]).unwrap();
        let v = dual_objective(&s, &b, &FairnessSpec::None {}, &[0.0, 0.0], &[]).unwrap();
        assert_eq!(v, (0.2 + 0.7) / 2.0);
    }

    #[test]
    fn zero_multipliers_match_unconstrained() {
        let s = ScoreMatrix::new(
            vec![vec![0.2, -1.0], vec![0.1, 0.7], vec![0.3, 0.9]],
            vec!["A".into(), "B".into(), "B".into()],
        )
        .unwrap();
        let b = Capacities::new(vec![1.0, 0.4]).unwrap();
        let spec = FairnessSpec::AllocParity { delta: 0.01 };
        let layout = constraint_layout(&s, &spec).unwrap();
        assert_eq!(layout.len(), 4);
        let lambda = vec![0.0; layout.len()];
        let a = dual_objective(&s, &b, &spec, &[0.0, 0.3], &lambda).unwrap();
        let c = dual_objective(&s, &b, &FairnessSpec::None {}, &[0.0, 0.3], &[]).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (s, b) = example_a();
        assert!(matches!(
            dual_objective(&s, &b, &FairnessSpec::None {}, &[0.0], &[]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(dual_objective(&s, &b, &FairnessSpec::None {}, &[0.0, 1.0], &[0.5]).is_err());
    }

    #[test]
    fn outcome_parity_scaling() {
        // Groups A and B with two rows each; γ(A) = λ(A,B) = 0.1.
        let s = ScoreMatrix::new(
            vec![vec![0.0, 1.0]; 4],
            vec!["A".into(), "A".into(), "B".into(), "B".into()],
        )
        .unwrap();
        let sol = DualSolution {
            mu: vec![0.0, 0.2],
            lambda: vec![
                LambdaEntry { t: None, g: "A".into(), g_prime: "B".into(), value: 0.1 },
                LambdaEntry { t: None, g: "B".into(), g_prime: "A".into(), value: 0.0 },
            ],
            objective: 0.0,
            gap_bound: 0.0,
            group_counts: s.group_counts(),
            fairness: FairnessSpec::OutcomeParity { delta: 0.0 },
            iterations: 0,
        };
        let adj = sol.adjuster().unwrap();
        let out = adj.adjust(&[0.0, 1.0], adj.group_index("A").unwrap());
        assert!((out[1] - 0.6).abs() < 1e-15);
        // Cross-check against the objective on the one-row matrix of group A.
        let one = ScoreMatrix::new(vec![vec![0.0, 1.0]], vec!["A".into()]).unwrap();
        let b = Capacities::new(vec![1.0, 0.0]).unwrap();
        let v = dual_objective(&one, &b, &FairnessSpec::None {}, &[0.0, 0.2], &[]).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn priority_sets_are_validated() {
        let s = ScoreMatrix::new(
            vec![vec![0.0, 1.0]; 3],
            vec!["A".into(), "B".into(), "C".into()],
        )
        .unwrap();
        let spec = |min: &[&str], maj: &[&str]| FairnessSpec::AllocMinorityPriority {
            minority: min.iter().map(|s| s.to_string()).collect(),
            majority: maj.iter().map(|s| s.to_string()).collect(),
        };
        assert!(constraint_layout(&s, &spec(&["A"], &["B", "C"])).is_ok());
        for bad in [
            spec(&["A"], &["B"]),
            spec(&["A"], &["A", "B", "C"]),
            spec(&["Z"], &["A", "B", "C"]),
            spec(&[], &["A", "B", "C"]),
        ] {
            assert!(matches!(
                constraint_layout(&s, &bad),
                Err(Error::InvalidFairness(_))
            ));
        }
    }

    #[test]
    fn fairness_spec_json() {
        let spec: FairnessSpec = serde_json::from_str(r#"{"kind":"alloc_parity"}"#).unwrap();
        assert_eq!(spec, FairnessSpec::AllocParity { delta: 0.01 });
        assert!(serde_json::from_str::<FairnessSpec>(r#"{"kind":"none","x":1}"#).is_err());
    }

    #[test]
    fn capacities_validate() {
        assert!(Capacities::new(vec![0.9, 0.1]).is_err());
        assert!(Capacities::new(vec![1.0, 1.5]).is_err());
        assert_eq!(Capacities::new(vec![1.0, 0.25, 0.1]).unwrap().caps(10), vec![10, 2, 1]);
    }
}
