//! Kelley's cutting-plane method over the price box `[0, 2·max|s| + 1]`.
//!
//! Each iteration evaluates F and one subgradient at the master's minimizer
//! and adds the cut `F(xⱼ) + gⱼ·(x − xⱼ)`. The master, `min θ` over the cuts
//! and the box, is rewritten as `max θ′′ = C − θ` so that the all-slack basis
//! is feasible (`C` exceeds F at the origin, and every cut underestimates F).

use serde::{Deserialize, Serialize};

use super::simplex::{maximize, LpResult};
use super::{Capacities, DualSolution, FairnessSpec, Problem, ScoreMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_CUTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Absolute optimality tolerance; defaults to `1e-6·(1 + max|s|)`.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_max_cuts")]
    pub max_cuts: usize,
}

fn default_max_cuts() -> usize {
    DEFAULT_MAX_CUTS
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_cuts: DEFAULT_MAX_CUTS,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol: Some(tol),
            ..Self::default()
        }
    }
}

struct Cut {
    grad: Vec<f64>,
    // Cut value at the origin, F(xⱼ) − gⱼ·xⱼ.
    offset: f64,
}

pub fn solve(
    scores: &ScoreMatrix,
    b: &Capacities,
    spec: &FairnessSpec,
    options: &SolveOptions,
) -> Result<DualSolution> {
    let problem = Problem::new(scores, b, spec)?;
    let max_abs = scores.max_abs();
    let tol = options.tol.unwrap_or(1e-6 * (1.0 + max_abs));
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let dim = problem.dim();
    let upper = 2.0 * max_abs + 1.0;

    let mut x = vec![0.0; dim];
    let first = problem.evaluate(&x);
    if dim == 0 {
        return Ok(problem.solution(&x, first.value, 0.0, 1));
    }
    let ceiling = first.value + 1.0 + first.value.abs();
    let mut best_x = x.clone();
    let mut best = first.value;
    let mut cuts = vec![Cut {
        offset: first.value,
        grad: first.grad,
    }];

    loop {
        let (next, lower) = master(&cuts, dim, upper, ceiling);
        let gap = (best - lower).max(0.0);
        if gap <= tol {
            check_bounded(&problem, &best_x, best, upper, tol)?;
            return Ok(problem.solution(&best_x, best, gap, cuts.len()));
        }
        if cuts.len() >= options.max_cuts {
            return Err(Error::NotConverged {
                best: Box::new(problem.solution(&best_x, best, gap, cuts.len())),
                gap_bound: gap,
                tolerance: tol,
                iterations: cuts.len(),
            });
        }
        x = next;
        let eval = problem.evaluate(&x);
        if eval.value < best - 1e-14 * (1.0 + best.abs()) {
            best = eval.value;
            best_x.clone_from(&x);
        }
        let offset = eval.value - dot(&eval.grad, &x);
        cuts.push(Cut {
            grad: eval.grad,
            offset,
        });
    }
}

/// Minimizer and minimum of the cutting-plane model over the box.
fn master(cuts: &[Cut], dim: usize, upper: f64, ceiling: f64) -> (Vec<f64>, f64) {
    let cols = dim + 1;
    let rows = cuts.len() + dim;
    let mut a = vec![0.0; rows * cols];
    let mut rhs = vec![0.0; rows];
    for (j, cut) in cuts.iter().enumerate() {
        a[j * cols..j * cols + dim].copy_from_slice(&cut.grad);
        a[j * cols + dim] = 1.0;
        rhs[j] = (ceiling - cut.offset).max(0.0);
    }
    for k in 0..dim {
        let r = cuts.len() + k;
        a[r * cols + k] = 1.0;
        rhs[r] = upper;
    }
    let mut c = vec![0.0; cols];
    c[dim] = 1.0;
    match maximize(&a, &rhs, &c) {
        LpResult::Optimal { x, value } => {
            let point = x[..dim].iter().map(|v| v.clamp(0.0, upper)).collect();
            (point, ceiling - value)
        }
        // θ′′ has coefficient 1 in every cut row, so the master is bounded.
        LpResult::Unbounded => unreachable!("cutting-plane master is bounded"),
    }
}

/// F should not keep decreasing past the box; if it does along a coordinate
/// pinned at the upper bound, the dual is unbounded for these inputs.
fn check_bounded(problem: &Problem, x: &[f64], value: f64, upper: f64, tol: f64) -> Result<()> {
    for k in 0..x.len() {
        if x[k] >= upper * (1.0 - 1e-9) {
            let mut probe = x.to_vec();
            probe[k] = 2.0 * upper;
            let further = problem.evaluate(&probe).value;
            if further < value - tol {
                return Err(Error::DualUnbounded(format!(
                    "objective drops from {value} to {further} when coordinate {k} leaves \
                     the price box; the fairness constraints may be infeasible for these scores"
                )));
            }
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::dual_objective;

    fn example_a() -> (ScoreMatrix, Capacities) {
        let rows = (1..=4).map(|v| vec![0.0, v as f64]).collect();
        (
            ScoreMatrix::ungrouped(rows).unwrap(),
            Capacities::new(vec![1.0, 0.25]).unwrap(),
        )
    }

    #[test]
    fn example_a_solves_to_three_and_a_half() {
        let (s, b) = example_a();
        let sol = solve(&s, &b, &FairnessSpec::None {}, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-6, "{}", sol.objective);
        assert!(sol.mu[1] >= 3.0 - 1e-6 && sol.mu[1] <= 4.0 + 1e-6, "{:?}", sol.mu);
        assert_eq!(sol.mu[0], 0.0);
        assert!(sol.gap_bound <= 1e-6 * 5.0);
    }

    #[test]
    fn non_binding_capacities_give_zero_prices() {
        let rows = vec![vec![0.3, 1.2, -0.4], vec![2.0, 0.1, 0.5], vec![-1.0, 0.0, 0.7]];
        let s = ScoreMatrix::ungrouped(rows).unwrap();
        let b = Capacities::new(vec![1.0, 1.0, 1.0]).unwrap();
        let sol = solve(&s, &b, &FairnessSpec::None {}, &SolveOptions::default()).unwrap();
        assert_eq!(sol.mu, vec![0.0, 0.0, 0.0]);
        assert_eq!(sol.objective, (1.2 + 2.0 + 0.7) / 3.0);
    }

    #[test]
    fn returned_objective_matches_evaluation() {
        let rows = (0..30)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos(), 0.1 * i as f64 % 1.3])
            .collect();
        let s = ScoreMatrix::ungrouped(rows).unwrap();
        let b = Capacities::new(vec![1.0, 0.2, 0.1]).unwrap();
        let sol = solve(&s, &b, &FairnessSpec::None {}, &SolveOptions::default()).unwrap();
        let v = dual_objective(&s, &b, &FairnessSpec::None {}, &sol.mu, &[]).unwrap();
        assert_eq!(v, sol.objective);
    }

    #[test]
    fn budget_exhaustion_carries_best_iterate() {
        let rows = (0..40)
            .map(|i| vec![0.0, (i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let s = ScoreMatrix::ungrouped(rows).unwrap();
        let b = Capacities::new(vec![1.0, 0.2, 0.1]).unwrap();
        let opts = SolveOptions { tol: Some(1e-9), max_cuts: 2 };
        match solve(&s, &b, &FairnessSpec::None {}, &opts) {
            Err(Error::NotConverged { best, gap_bound, iterations, .. }) => {
                assert_eq!(iterations, 2);
                assert!(gap_bound > 1e-9);
                assert_eq!(best.mu.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_outcome_parity_is_unbounded() {
        // Group A always scores higher than B under every treatment, and
        // δ = 0, so no allocation can equalize mean outcomes.
        let rows = vec![vec![5.0, 5.0], vec![5.0, 5.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        let groups = ["A", "A", "B", "B"].map(String::from).to_vec();
        let s = ScoreMatrix::new(rows, groups).unwrap();
        let b = Capacities::new(vec![1.0, 0.5]).unwrap();
        let spec = FairnessSpec::OutcomeParity { delta: 0.0 };
        assert!(matches!(
            solve(&s, &b, &spec, &SolveOptions::default()),
            Err(Error::DualUnbounded(_))
        ));
    }
}
