//! Dense primal simplex for `max c·x  s.t.  A x ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! Condensed tableau, slack starting basis, Bland's rule for both the
//! entering and leaving choice, so it cannot cycle.

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
}

/// `a` is row-major with `b.len()` rows of `c.len()` entries.
pub(crate) fn maximize(a: &[f64], b: &[f64], c: &[f64]) -> LpResult {
    let (rows, cols) = (b.len(), c.len());
    assert_eq!(a.len(), rows * cols, "constraint matrix shape");
    assert!(b.iter().all(|&v| v >= 0.0), "slack basis needs b ≥ 0");

    let w = cols + 1;
    // Rows 0..rows are constraints, the last row is the objective (−c).
    let mut t = vec![0.0; (rows + 1) * w];
    for i in 0..rows {
        t[i * w..i * w + cols].copy_from_slice(&a[i * cols..(i + 1) * cols]);
        t[i * w + cols] = b[i];
    }
    for j in 0..cols {
        t[rows * w + j] = -c[j];
    }
    // Variable labels: 0..cols are decision variables, cols.. are slacks.
    let mut nonbasic: Vec<usize> = (0..cols).collect();
    let mut basic: Vec<usize> = (cols..cols + rows).collect();

    loop {
        let obj = &t[rows * w..rows * w + cols];
        let entering = (0..cols)
            .filter(|&j| obj[j] < -EPS)
            .min_by_key(|&j| nonbasic[j]);
        let Some(s) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let coef = t[i * w + s];
            if coef > EPS {
                let ratio = t[i * w + cols] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best || (ratio == best && basic[i] < basic[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return LpResult::Unbounded;
        };
        pivot(&mut t, w, rows + 1, r, s);
        std::mem::swap(&mut basic[r], &mut nonbasic[s]);
    }

    let mut x = vec![0.0; cols];
    for (i, &label) in basic.iter().enumerate() {
        if label < cols {
            x[label] = t[i * w + cols];
        }
    }
    LpResult::Optimal {
        x,
        value: t[rows * w + cols],
    }
}

fn pivot(t: &mut [f64], w: usize, height: usize, r: usize, s: usize) {
    let p = t[r * w + s];
    let pivot_row: Vec<f64> = t[r * w..(r + 1) * w].to_vec();
    for i in 0..height {
        if i == r {
            continue;
        }
        let f = t[i * w + s];
        if f == 0.0 {
            continue;
        }
        let row = &mut t[i * w..(i + 1) * w];
        for j in 0..w {
            if j != s {
                row[j] -= f * pivot_row[j] / p;
            }
        }
        row[s] = -f / p;
    }
    let row = &mut t[r * w..(r + 1) * w];
    for j in 0..w {
        if j != s {
            row[j] /= p;
        }
    }
    row[s] = 1.0 / p;
}
