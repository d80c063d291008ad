//! Brute-force grid search, used as a test oracle for the solver.

use super::{Capacities, DualSolution, FairnessSpec, Problem, ScoreMatrix};
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;
pub const MAX_ROWS: usize = 200;

/// Best point of the grid `{0, h, 2h, …} ∪ {U}` per coordinate, with
/// `U = 2·max|s| + 1`.
///
/// All but the last coordinate are enumerated. Along the last coordinate F
/// is convex, so the restriction to grid points is a convex sequence and its
/// minimum is found by bisection on the forward difference. The reported
/// `gap_bound` is the nominal `grid_step · dim`.
pub fn oracle_solve(
    scores: &ScoreMatrix,
    b: &Capacities,
    spec: &FairnessSpec,
    grid_step: f64,
) -> Result<DualSolution> {
    let problem = Problem::new(scores, b, spec)?;
    let dim = problem.dim();
    if dim > MAX_DIM || scores.n() > MAX_ROWS {
        return Err(Error::OracleScale(format!(
            "dimension {dim} (max {MAX_DIM}), rows {} (max {MAX_ROWS})",
            scores.n()
        )));
    }
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid_step must be positive"));
    }
    let upper = 2.0 * scores.max_abs() + 1.0;
    let steps = (upper / grid_step).floor() as usize;
    let coord = |j: usize| if j > steps { upper } else { j as f64 * grid_step };
    // Indices 0..=steps are on the grid; steps + 1 is the upper boundary,
    // unless the grid already lands on it.
    let last = if steps as f64 * grid_step < upper { steps + 1 } else { steps };

    let mut best_x = vec![0.0; dim];
    let mut best = problem.evaluate(&best_x).value;
    if dim == 0 {
        return Ok(problem.solution(&best_x, best, 0.0, 1));
    }

    let mut outer = vec![0usize; dim - 1];
    let mut x = vec![0.0; dim];
    let mut evaluations = 0usize;
    loop {
        for (k, &j) in outer.iter().enumerate() {
            x[k] = coord(j);
        }
        let mut f = |j: usize| {
            x[dim - 1] = coord(j);
            evaluations += 1;
            problem.evaluate(&x).value
        };
        // Smallest j with f(j + 1) ≥ f(j).
        let (mut lo, mut hi) = (0usize, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if f(mid + 1) >= f(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let value = f(lo);
        if value < best {
            best = value;
            best_x.clone_from(&x);
        }

        // Advance the odometer over the enumerated coordinates.
        let mut k = 0;
        loop {
            if k == outer.len() {
                return Ok(problem.solution(&best_x, best, grid_step * dim as f64, evaluations));
            }
            outer[k] += 1;
            if outer[k] <= last {
                break;
            }
            outer[k] = 0;
            k += 1;
        }
    }
}
