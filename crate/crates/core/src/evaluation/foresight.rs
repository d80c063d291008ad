//! Perfect-foresight benchmark: the best capacity-respecting assignment of
//! rows to treatments given every counterfactual value.
//!
//! Successive shortest paths on the bipartite flow network
//! `source → rows → treatments → sink`, condensed onto treatment nodes.
//! Between treatments `a` and `b` the residual graph offers "move a row
//! currently at `a` to `b`" with gain `v_jb − v_ja`; from the source it offers
//! "assign an unassigned row to `t`" with gain `v_it`. Each augmentation takes
//! the best of these per edge (heaps with lazy deletion, ties to the lower row
//! index), finds the longest path by Bellman-Ford over the `m + 2` nodes and
//! ends at a treatment with spare capacity. The residual graph of an optimal
//! partial flow has no positive cycles, so the longest path is well defined.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dual::Capacities;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    gain: f64,
    row: usize,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Max-heap on gain, then on lower row index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then(other.row.cmp(&self.row))
    }
}

const UNASSIGNED: usize = usize::MAX;

/// Optimal assignment and its total `Σᵢ v[i][aᵢ]` (summed in row order) for
/// row-major `values` of width `capacities.len()`, with caps `⌊bᵗN⌋`, `cap⁰ = N`.
pub fn perfect_foresight(values: &[f64], capacities: &Capacities) -> Result<(Vec<usize>, f64)> {
    let k = capacities.len();
    if values.len() % k != 0 {
        return Err(Error::dims("values are not a multiple of the treatment count"));
    }
    let caps = capacities.caps(values.len() / k);
    perfect_foresight_with_caps(values, &caps)
}

/// As [`perfect_foresight`] with explicit integer caps; `caps[0]` must be at
/// least the row count so that a full assignment exists.
pub fn perfect_foresight_with_caps(values: &[f64], caps: &[usize]) -> Result<(Vec<usize>, f64)> {
    let k = caps.len();
    if k == 0 || values.len() % k != 0 {
        return Err(Error::dims("values are not a multiple of the treatment count"));
    }
    let n = values.len() / k;
    if caps[0] < n {
        return Err(Error::invalid("cap⁰ must cover every row"));
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / k,
            treatment: pos % k,
        });
    }
    let v = |i: usize, t: usize| values[i * k + t];

    let mut assigned = vec![UNASSIGNED; n];
    let mut counts = vec![0usize; k];
    let mut start: Vec<BinaryHeap<Entry>> = (0..k)
        .map(|t| (0..n).map(|row| Entry { gain: v(row, t), row }).collect())
        .collect();
    // moves[a][b]: rows at a, keyed by the gain of moving them to b.
    let mut moves: Vec<Vec<BinaryHeap<Entry>>> = vec![vec![BinaryHeap::new(); k]; k];

    // Node k is the source; nodes 0..k are treatments.
    let source = k;
    for _ in 0..n {
        // Best edge per (from, to), after discarding stale heap tops.
        let mut edge: Vec<Vec<Option<Entry>>> = vec![vec![None; k]; k + 1];
        for t in 0..k {
            let heap = &mut start[t];
            while heap.peek().is_some_and(|e| assigned[e.row] != UNASSIGNED) {
                heap.pop();
            }
            edge[source][t] = heap.peek().copied();
        }
        for a in 0..k {
            for b in 0..k {
                if a == b {
                    continue;
                }
                let heap = &mut moves[a][b];
                while heap.peek().is_some_and(|e| assigned[e.row] != a) {
                    heap.pop();
                }
                edge[a][b] = heap.peek().copied();
            }
        }

        // Bellman-Ford longest paths from the source.
        let mut dist = vec![f64::NEG_INFINITY; k];
        let mut pred = vec![source; k];
        for t in 0..k {
            if let Some(e) = edge[source][t] {
                dist[t] = e.gain;
            }
        }
        for _ in 0..k {
            let mut changed = false;
            for a in 0..k {
                if dist[a] == f64::NEG_INFINITY {
                    continue;
                }
                for b in 0..k {
                    if let Some(e) = edge[a][b] {
                        if dist[a] + e.gain > dist[b] {
                            dist[b] = dist[a] + e.gain;
                            pred[b] = a;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let end = (0..k)
            .filter(|&t| counts[t] < caps[t] && dist[t] > f64::NEG_INFINITY)
            .fold(None, |best: Option<usize>, t| match best {
                Some(b) if dist[b] >= dist[t] => Some(b),
                _ => Some(t),
            })
            .expect("treatment 0 always has spare capacity");

        // Collect the path's rows before changing any assignment.
        let mut steps = Vec::new();
        let mut node = end;
        loop {
            let from = pred[node];
            let e = edge[from][node].expect("path edge exists");
            steps.push((e.row, node));
            if from == source {
                break;
            }
            node = from;
        }
        for &(row, to) in steps.iter().rev() {
            let from = assigned[row];
            if from != UNASSIGNED {
                counts[from] -= 1;
            }
            assigned[row] = to;
            counts[to] += 1;
            for b in 0..k {
                if b != to {
                    moves[to][b].push(Entry {
                        gain: v(row, b) - v(row, to),
                        row,
                    });
                }
            }
        }
    }

    let total = (0..n).map(|i| v(i, assigned[i])).sum();
    Ok((assigned, total))
}

/// Exhaustive search over all `kⁿ` assignments; for tests on tiny instances.
pub fn brute_force(values: &[f64], caps: &[usize]) -> (Vec<usize>, f64) {
    let k = caps.len();
    let n = values.len() / k;
    assert!(n <= 10, "brute force is exponential");
    let mut best = (vec![0; n], f64::NEG_INFINITY);
    let mut current = vec![0usize; n];
    loop {
        let mut counts = vec![0usize; k];
        current.iter().for_each(|&t| counts[t] += 1);
        if counts.iter().zip(caps).all(|(c, cap)| c <= cap) {
            let total: f64 = (0..n).map(|i| values[i * k + current[i]]).sum();
            if total > best.1 {
                best = (current.clone(), total);
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            current[pos] += 1;
            if current[pos] < k {
                break;
            }
            current[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_a_single_slot() {
        let values: Vec<f64> = (1..=4).flat_map(|v| [0.0, v as f64]).collect();
        let (assign, total) = perfect_foresight_with_caps(&values, &[4, 1]).unwrap();
        assert_eq!(total, 4.0);
        assert_eq!(assign, vec![0, 0, 0, 1]);
    }

    #[test]
    fn unconstrained_is_rowwise_max() {
        let values = [0.1, 0.5, 0.3, 0.9, 0.2, 0.0, -1.0, -2.0, -0.5];
        let (assign, total) = perfect_foresight_with_caps(&values, &[3, 3, 3]).unwrap();
        assert_eq!(assign, vec![1, 0, 2]);
        assert_eq!(total, 0.5 + 0.9 + -0.5);
    }

    #[test]
    fn reassignment_paths_are_found() {
        // Greedy row-by-row would give row 0 treatment 1 and lose row 1's
        // larger gain; the optimum moves row 0 to treatment 2.
        let values = [0.0, 5.0, 4.0, 0.0, 6.0, 0.0, 0.0, 0.0, 3.0];
        let caps = [3, 1, 1];
        let (_, total) = perfect_foresight_with_caps(&values, &caps).unwrap();
        assert_eq!(total, brute_force(&values, &caps).1);
        assert_eq!(total, 10.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(perfect_foresight_with_caps(&[0.0, f64::NAN], &[1, 1]).is_err());
    }
}
