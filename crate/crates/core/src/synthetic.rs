//! Linear and quadratic synthetic benchmarks with known conditional means
//! and propensities.
//!
//! Noise `εₜ ~ N(0, σ)` is read with σ as the standard deviation.

use serde::{Deserialize, Serialize};

use crate::argmax_first;
use crate::data::{Dataset, Row};
use crate::error::{Error, Result};
use crate::rng::Stream;

pub const FEATURE_DIM: usize = 2;
pub const TREATMENT_COUNT: usize = 3;
pub const CAPACITIES: [f64; 3] = [1.0, 0.1, 0.05];
/// Noise levels of the ratio-curve experiment.
pub const SIGMA_SWEEP: [f64; 5] = [0.1, 0.5, 0.8, 1.15, 1.5];

// m^t(x) = A[t][0] f(x1) + A[t][1] f(x2), f = identity or square.
const WEIGHTS: [[f64; 2]; 3] = [[0.25, 0.75], [0.75, 0.75], [0.25, 1.25]];
const REGION_PROPENSITY: [[f64; 3]; 3] = [[0.8, 0.1, 0.1], [0.6, 0.3, 0.1], [0.6, 0.1, 0.3]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub sigma: f64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { kind, sigma })
    }

    pub fn linear(sigma: f64) -> Self {
        Self::new(ScenarioKind::Linear, sigma).expect("positive sigma")
    }

    pub fn quadratic(sigma: f64) -> Self {
        Self::new(ScenarioKind::Quadratic, sigma).expect("positive sigma")
    }

    pub fn capacities(&self) -> Vec<f64> {
        CAPACITIES.to_vec()
    }

    pub fn true_means(&self, t: usize, x: &[f64]) -> Result<f64> {
        if t >= TREATMENT_COUNT {
            return Err(Error::invalid(format!("treatment {t} outside 0..3")));
        }
        if x.len() != FEATURE_DIM {
            return Err(Error::dims(format!("expected 2 covariates, got {}", x.len())));
        }
        Ok(self.mean_unchecked(t, x))
    }

    /// All three conditional means at `x`.
    pub fn mean_vector(&self, x: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|t| self.mean_unchecked(t, x))
    }

    fn mean_unchecked(&self, t: usize, x: &[f64]) -> f64 {
        let [a, b] = WEIGHTS[t];
        match self.kind {
            ScenarioKind::Linear => a * x[0] + b * x[1],
            ScenarioKind::Quadratic => a * x[0] * x[0] + b * x[1] * x[1],
        }
    }

    /// Historical assignment probabilities, keyed on the best treatment in
    /// expectation (lowest index on ties).
    pub fn true_propensity(&self, x: &[f64]) -> [f64; 3] {
        REGION_PROPENSITY[argmax_first(&self.mean_vector(x))]
    }

    /// `n` rows with X ~ N(0, I₂), independent noise per potential outcome
    /// and T drawn from the true propensity. All rows share group `"all"`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.generate_with_groups(n, seed, &GroupRule::Single("all".into()))
    }

    /// As [`Scenario::generate`], with group labels from `rule`. The rule's
    /// randomness comes from a separate stream, so covariates, outcomes and
    /// treatments do not depend on the rule.
    pub fn generate_with_groups(&self, n: usize, seed: u64, rule: &GroupRule) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        rule.validate()?;
        let mut draws = Stream::derive(seed, 0);
        let mut labels = Stream::derive(seed, 1);
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let x = vec![draws.normal(), draws.normal()];
            let means = self.mean_vector(&x);
            let potential: Vec<f64> = means
                .iter()
                .map(|m| m + self.sigma * draws.normal())
                .collect();
            let treatment = draws.categorical(&self.true_propensity(&x));
            let group = rule.label(&x, &mut labels);
            rows.push(Row {
                id: i.to_string(),
                outcome: potential[treatment],
                covariates: x,
                group,
                treatment,
                potential_outcomes: Some(potential),
            });
        }
        Dataset::new(rows, Some(TREATMENT_COUNT))
    }
}

/// How synthetic rows are split into protected groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GroupRule {
    /// Every row gets the same label.
    Single(String),
    /// `above` when `x[feature] > cutoff`, else `below`.
    Threshold {
        feature: usize,
        cutoff: f64,
        below: String,
        above: String,
    },
    /// `second` with probability `sigmoid(intercept + slope·x[feature])`.
    Logistic {
        feature: usize,
        intercept: f64,
        slope: f64,
        first: String,
        second: String,
    },
}

impl GroupRule {
    fn validate(&self) -> Result<()> {
        match self {
            GroupRule::Single(_) => Ok(()),
            GroupRule::Threshold { feature, .. } | GroupRule::Logistic { feature, .. }
                if *feature >= FEATURE_DIM =>
            {
                Err(Error::invalid(format!("group rule feature {feature} out of range")))
            }
            _ => Ok(()),
        }
    }

    fn label(&self, x: &[f64], stream: &mut Stream) -> String {
        match self {
            GroupRule::Single(label) => label.clone(),
            GroupRule::Threshold {
                feature,
                cutoff,
                below,
                above,
            } => if x[*feature] > *cutoff { above } else { below }.clone(),
            GroupRule::Logistic {
                feature,
                intercept,
                slope,
                first,
                second,
            } => {
                let p = 1.0 / (1.0 + (-(intercept + slope * x[*feature])).exp());
                if stream.uniform() < p { second } else { first }.clone()
            }
        }
    }
}
