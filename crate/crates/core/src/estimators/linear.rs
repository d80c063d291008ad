//! Weighted least squares and lasso with an intercept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

/// Weighted column means and the weight total.
fn weighted_means(x: &[f64], dim: usize, y: &[f64], w: Option<&[f64]>) -> (Vec<f64>, f64, f64) {
    let mut mx = vec![0.0; dim];
    let mut my = 0.0;
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let wi = w.map_or(1.0, |w| w[i]);
        total += wi;
        my += wi * yi;
        for j in 0..dim {
            mx[j] += wi * x[i * dim + j];
        }
    }
    mx.iter_mut().for_each(|v| *v /= total);
    (mx, my / total, total)
}

impl LinearModel {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// Solves the centered weighted normal equations by Cholesky. A pivot
    /// that vanishes relative to the diagonal means a singular design.
    pub fn fit_ols(
        x: &[f64],
        dim: usize,
        y: &[f64],
        w: Option<&[f64]>,
        treatment: usize,
    ) -> Result<Self> {
        let n = y.len();
        if n <= dim {
            return Err(Error::SingularDesign { treatment });
        }
        let (mx, my, _) = weighted_means(x, dim, y, w);
        let mut gram = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        let mut centered = vec![0.0; dim];
        for i in 0..n {
            let wi = w.map_or(1.0, |w| w[i]);
            for j in 0..dim {
                centered[j] = x[i * dim + j] - mx[j];
            }
            let yi = y[i] - my;
            for a in 0..dim {
                rhs[a] += wi * centered[a] * yi;
                for b in 0..=a {
                    gram[a * dim + b] += wi * centered[a] * centered[b];
                }
            }
        }
        let coef = cholesky_solve(&mut gram, &mut rhs, dim)
            .ok_or(Error::SingularDesign { treatment })?;
        let intercept = my - coef.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self { intercept, coef })
    }

    /// Cyclic coordinate descent on
    /// `(1/(2Σw)) Σ wᵢ (yᵢ − β₀ − xᵢ·β)² + α‖β‖₁` over standardized columns,
    /// stopping when no coefficient moves by more than 1e-8 in a sweep.
    /// Coefficients are returned on the original scale.
    pub fn fit_lasso(x: &[f64], dim: usize, y: &[f64], w: Option<&[f64]>, alpha: f64) -> Self {
        let n = y.len();
        let (mx, my, total) = weighted_means(x, dim, y, w);
        let mut scale = vec![0.0; dim];
        for i in 0..n {
            let wi = w.map_or(1.0, |w| w[i]);
            for j in 0..dim {
                scale[j] += wi * (x[i * dim + j] - mx[j]).powi(2);
            }
        }
        scale.iter_mut().for_each(|s| *s = (*s / total).sqrt());

        // Column-major standardized design; constant columns stay at zero.
        let mut z = vec![0.0; n * dim];
        for j in 0..dim {
            if scale[j] > 0.0 {
                for i in 0..n {
                    z[j * n + i] = (x[i * dim + j] - mx[j]) / scale[j];
                }
            }
        }
        let weight = |i: usize| w.map_or(1.0, |w| w[i]) / total;
        let mut resid: Vec<f64> = y.iter().map(|v| v - my).collect();
        let mut beta = vec![0.0; dim];

        for _ in 0..LASSO_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..dim {
                if scale[j] == 0.0 {
                    continue;
                }
                let col = &z[j * n..(j + 1) * n];
                let mut rho = 0.0;
                for i in 0..n {
                    rho += weight(i) * col[i] * resid[i];
                }
                // Standardized columns have unit weighted second moment.
                rho += beta[j];
                let next = soft_threshold(rho, alpha);
                let change = next - beta[j];
                if change != 0.0 {
                    for i in 0..n {
                        resid[i] -= change * col[i];
                    }
                    beta[j] = next;
                }
                max_change = max_change.max(change.abs());
            }
            if max_change < LASSO_TOL {
                break;
            }
        }

        let coef: Vec<f64> = (0..dim)
            .map(|j| if scale[j] > 0.0 { beta[j] / scale[j] } else { 0.0 })
            .collect();
        let intercept = my - coef.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
        Self { intercept, coef }
    }
}

fn soft_threshold(v: f64, alpha: f64) -> f64 {
    if v > alpha {
        v - alpha
    } else if v < -alpha {
        v + alpha
    } else {
        0.0
    }
}

/// Solve `A β = r` for symmetric positive definite `A` given by its lower
/// triangle (row-major, overwritten with the factor).
pub(super) fn cholesky_solve(a: &mut [f64], r: &mut [f64], dim: usize) -> Option<Vec<f64>> {
    let max_diag = (0..dim).map(|j| a[j * dim + j]).fold(0.0, f64::max);
    if dim > 0 && !(max_diag > 0.0) {
        return None;
    }
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            d -= a[j * dim + k] * a[j * dim + k];
        }
        if !(d > 1e-12 * max_diag) {
            return None;
        }
        let d = d.sqrt();
        a[j * dim + j] = d;
        for i in j + 1..dim {
            let mut v = a[i * dim + j];
            for k in 0..j {
                v -= a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = v / d;
        }
    }
    // Forward then backward substitution.
    for i in 0..dim {
        let mut v = r[i];
        for k in 0..i {
            v -= a[i * dim + k] * r[k];
        }
        r[i] = v / a[i * dim + i];
    }
    for i in (0..dim).rev() {
        let mut v = r[i];
        for k in i + 1..dim {
            v -= a[k * dim + i] * r[k];
        }
        r[i] = v / a[i * dim + i];
    }
    Some(r.to_vec())
}
