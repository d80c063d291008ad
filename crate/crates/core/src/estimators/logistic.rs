//! Multinomial logistic regression fit by damped Newton steps with a
//! backtracking line search on standardized features. Class 0 is the
//! reference class with zero parameters.

use serde::{Deserialize, Serialize};

use super::linear::cholesky_solve;

pub const DEFAULT_MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-8;

/// Class scores `intercept[c] + coef[c]·x`, on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: Vec<f64>,
    pub coef: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .intercept
            .iter()
            .zip(&self.coef)
            .map(|(b, w)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        softmax(&logits)
    }

    /// Minimizes the mean negative log-likelihood until the gradient norm
    /// drops below 1e-8 or `max_iter` Newton steps have been taken. A class
    /// absent from `labels` has its logits driven toward −∞.
    pub fn fit(x: &[f64], dim: usize, labels: &[usize], classes: usize, max_iter: usize) -> Self {
        let n = labels.len();
        let mut mean = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        for i in 0..n {
            for j in 0..dim {
                mean[j] += x[i * dim + j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for i in 0..n {
            for j in 0..dim {
                scale[j] += (x[i * dim + j] - mean[j]).powi(2);
            }
        }
        scale
            .iter_mut()
            .for_each(|s| *s = if *s > 0.0 { (*s / n as f64).sqrt() } else { 1.0 });
        let z: Vec<f64> = (0..n * dim)
            .map(|idx| (x[idx] - mean[idx % dim]) / scale[idx % dim])
            .collect();

        // Parameters: per non-reference class, intercept then dim weights.
        let width = dim + 1;
        let free = (classes - 1) * width;
        let mut theta = vec![0.0; free];
        let mut iterations = 0;
        let mut state = newton_terms(&z, dim, labels, classes, &theta);
        while iterations < max_iter && free > 0 {
            let gnorm2: f64 = state.grad.iter().map(|g| g * g).sum();
            if gnorm2.sqrt() < GRAD_TOL {
                break;
            }
            iterations += 1;
            let trace = (0..free).map(|j| state.hess[j * free + j]).sum::<f64>() / free as f64;
            let mut damping = 1e-10 * (trace + 1e-300);
            let direction = loop {
                let mut h = state.hess.clone();
                (0..free).for_each(|j| h[j * free + j] += damping);
                let mut r = state.grad.clone();
                if let Some(d) = cholesky_solve(&mut h, &mut r, free) {
                    break d;
                }
                damping = if damping > 0.0 { damping * 10.0 } else { 1e-12 };
            };
            let slope: f64 = direction.iter().zip(&state.grad).map(|(d, g)| d * g).sum();
            let mut step = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = theta.iter().zip(&direction).map(|(t, d)| t - step * d).collect();
                let next = newton_terms(&z, dim, labels, classes, &trial);
                if next.loss <= state.loss - 1e-4 * step * slope {
                    theta = trial;
                    state = next;
                    break true;
                }
                step *= 0.5;
                if step < 1e-12 {
                    break false;
                }
            };
            if !accepted {
                break;
            }
        }
        // Prepend the reference class.
        let theta: Vec<f64> = vec![0.0; width].into_iter().chain(theta).collect();

        let mut intercept = vec![0.0; classes];
        let mut coef = vec![vec![0.0; dim]; classes];
        for c in 0..classes {
            let t = &theta[c * width..(c + 1) * width];
            let mut b = t[0];
            for j in 0..dim {
                coef[c][j] = t[j + 1] / scale[j];
                b -= coef[c][j] * mean[j];
            }
            intercept[c] = b;
        }
        Self {
            intercept,
            coef,
            iterations,
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

struct Terms {
    loss: f64,
    grad: Vec<f64>,
    /// Row-major Hessian over the free parameters.
    hess: Vec<f64>,
}

fn newton_terms(z: &[f64], dim: usize, labels: &[usize], classes: usize, theta: &[f64]) -> Terms {
    let n = labels.len();
    let width = dim + 1;
    let free = theta.len();
    let mut grad = vec![0.0; free];
    let mut hess = vec![0.0; free * free];
    let mut loss = 0.0;
    let mut logits = vec![0.0; classes];
    let mut p = vec![0.0; classes];
    let mut feat = vec![1.0; width];
    for (i, &y) in labels.iter().enumerate() {
        feat[1..].copy_from_slice(&z[i * dim..(i + 1) * dim]);
        logits[0] = 0.0;
        for c in 1..classes {
            let t = &theta[(c - 1) * width..c * width];
            logits[c] = t.iter().zip(&feat).map(|(a, b)| a * b).sum::<f64>();
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - logits[y];
        for c in 0..classes {
            p[c] = (logits[c] - log_norm).exp();
        }
        for c in 1..classes {
            let residual = p[c] - if c == y { 1.0 } else { 0.0 };
            let base = (c - 1) * width;
            for a in 0..width {
                grad[base + a] += residual * feat[a];
            }
            for c2 in 1..=c {
                let w = if c == c2 { p[c] * (1.0 - p[c]) } else { -p[c] * p[c2] };
                let base2 = (c2 - 1) * width;
                for a in 0..width {
                    let wa = w * feat[a];
                    for b in 0..width {
                        hess[(base + a) * free + base2 + b] += wa * feat[b];
                    }
                }
            }
        }
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    // Fill the upper blocks from the lower ones.
    for r in 0..free {
        for c in 0..free {
            if c / width > r / width {
                hess[r * free + c] = hess[c * free + r];
            }
        }
    }
    hess.iter_mut().for_each(|h| *h *= inv);
    Terms {
        loss: loss * inv,
        grad,
        hess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn recovers_generating_coefficients() {
        let mut s = Stream::new(8);
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        // Class 1 vs 0 with logit 0.5 + 1.5x; class 2 never appears.
        let labels: Vec<usize> = x
            .iter()
            .map(|&v| {
                let p = 1.0 / (1.0 + (-(0.5 + 1.5 * v)).exp());
                usize::from(s.uniform() < p)
            })
            .collect();
        let m = LogisticModel::fit(&x, 1, &labels, 2, DEFAULT_MAX_ITER);
        let slope = m.coef[1][0] - m.coef[0][0];
        let intercept = m.intercept[1] - m.intercept[0];
        assert!((slope - 1.5).abs() < 0.1, "{slope}");
        assert!((intercept - 0.5).abs() < 0.1, "{intercept}");
        let p = m.predict(&[0.3]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_class_fit_recovers_logits() {
        let mut s = Stream::new(9);
        let n = 30_000;
        let x: Vec<f64> = (0..2 * n).map(|_| s.normal()).collect();
        let labels: Vec<usize> = x
            .chunks(2)
            .map(|r| {
                let l = [0.0, 0.3 + r[0] - 0.5 * r[1], -0.4 + 0.8 * r[1]];
                s.categorical(&softmax(&l))
            })
            .collect();
        let m = LogisticModel::fit(&x, 2, &labels, 3, DEFAULT_MAX_ITER);
        assert!(m.iterations < 50, "{}", m.iterations);
        let rel = |c: usize| {
            (
                m.intercept[c] - m.intercept[0],
                m.coef[c][0] - m.coef[0][0],
                m.coef[c][1] - m.coef[0][1],
            )
        };
        let (b1, a1, c1) = rel(1);
        let (b2, a2, c2) = rel(2);
        for (got, want) in [(b1, 0.3), (a1, 1.0), (c1, -0.5), (b2, -0.4), (a2, 0.0), (c2, 0.8)] {
            assert!((got - want).abs() < 0.1, "{got} vs {want}");
        }
    }
}
