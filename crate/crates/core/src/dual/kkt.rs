//! Complementary-slackness diagnostics for a dual solution.

use serde::{Deserialize, Serialize};

use super::{Capacities, DualSolution, FairnessSpec, Problem, ScoreMatrix};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentKkt {
    pub t: usize,
    pub rate: f64,
    pub capacity: f64,
    /// `bᵗ − rᵗ`.
    pub slack: f64,
    /// `|μᵗ (bᵗ − rᵗ)|`.
    pub cs_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintKkt {
    pub t: Option<usize>,
    pub g: String,
    pub g_prime: String,
    /// In-sample rate (or mean outcome) of `g` minus that of `g′`.
    pub difference: f64,
    /// `δ − difference`; negative means violated.
    pub slack: f64,
    pub lambda: f64,
    pub cs_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub n: usize,
    pub treatments: Vec<TreatmentKkt>,
    pub constraints: Vec<ConstraintKkt>,
}

impl KktReport {
    pub fn max_cs_residual(&self) -> f64 {
        self.treatments
            .iter()
            .map(|t| t.cs_residual)
            .chain(self.constraints.iter().map(|c| c.cs_residual))
            .fold(0.0, f64::max)
    }
}

/// In-sample rates and residuals under the policy induced by `solution`.
/// The assignment uses the same adjusted scores and tie-break as the policy.
pub fn kkt_report(
    scores: &ScoreMatrix,
    b: &Capacities,
    spec: &FairnessSpec,
    solution: &DualSolution,
) -> Result<KktReport> {
    let problem = Problem::new(scores, b, spec)?;
    let lambda: Vec<f64> = solution.lambda.iter().map(|e| e.value).collect();
    let x = problem.point(&solution.mu, &lambda)?;
    let eval = problem.evaluate(&x);
    let n = scores.n();

    let treatments = (0..scores.width())
        .map(|t| {
            let rate = eval.counts[t] as f64 / n as f64;
            let slack = b.as_slice()[t] - rate;
            TreatmentKkt {
                t,
                rate,
                capacity: b.as_slice()[t],
                slack,
                cs_residual: (solution.mu[t] * slack).abs(),
            }
        })
        .collect();

    let m = scores.width() - 1;
    let constraints = solution
        .lambda
        .iter()
        .zip(&eval.grad[m..])
        .map(|(entry, &grad)| {
            let slack = grad;
            ConstraintKkt {
                t: entry.t,
                g: entry.g.clone(),
                g_prime: entry.g_prime.clone(),
                difference: problem.delta - slack,
                slack,
                lambda: entry.value,
                cs_residual: (entry.value * slack).abs(),
            }
        })
        .collect();

    Ok(KktReport {
        n,
        treatments,
        constraints,
    })
}
