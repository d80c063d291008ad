//! Propensity models `p̂(x)` with clipping to a floor.

use serde::{Deserialize, Serialize};

use super::logistic::{LogisticModel, DEFAULT_MAX_ITER};
use super::tree::DecisionTree;
use super::FeatureMap;
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_CLIP_FLOOR: f64 = 0.01;

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_max_depth() -> usize {
    8
}

fn default_min_leaf() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropensitySpec {
    MultinomialLogistic {
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    ClassificationTree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
}

impl PropensitySpec {
    pub fn logistic() -> Self {
        PropensitySpec::MultinomialLogistic {
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn tree() -> Self {
        PropensitySpec::ClassificationTree {
            max_depth: default_max_depth(),
            min_leaf: default_min_leaf(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensityState {
    MultinomialLogistic(LogisticModel),
    ClassificationTree(DecisionTree),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub treatment_count: usize,
    pub clip_floor: f64,
    pub features: FeatureMap,
    pub state: PropensityState,
}

impl PropensityModel {
    pub fn treatment_count(&self) -> usize {
        self.treatment_count
    }

    pub fn predict(&self, x: &[f64], group: &str) -> Result<Vec<f64>> {
        Ok(self.predict_features(&self.features.features(x, group)?))
    }

    /// Clipped probabilities for an already-encoded feature vector.
    pub fn predict_features(&self, features: &[f64]) -> Vec<f64> {
        let raw = match &self.state {
            PropensityState::MultinomialLogistic(m) => m.predict(features),
            PropensityState::ClassificationTree(t) => t.predict(features).to_vec(),
        };
        clip_probabilities(&raw, self.clip_floor)
    }
}

/// Raise components below `floor` to `floor` and rescale the rest to keep the
/// total at 1, repeating until no rescaled component falls below the floor.
/// Requires `raw.len() · floor < 1`.
pub fn clip_probabilities(raw: &[f64], floor: f64) -> Vec<f64> {
    let k = raw.len();
    let mut fixed = vec![false; k];
    let mut out = vec![0.0; k];
    loop {
        let free_mass = 1.0 - floor * fixed.iter().filter(|&&f| f).count() as f64;
        let free_raw: f64 = (0..k).filter(|&t| !fixed[t]).map(|t| raw[t].max(0.0)).sum();
        let free_count = fixed.iter().filter(|&&f| !f).count();
        let mut changed = false;
        for t in 0..k {
            if fixed[t] {
                out[t] = floor;
                continue;
            }
            out[t] = if free_raw > 0.0 {
                raw[t].max(0.0) * free_mass / free_raw
            } else {
                free_mass / free_count as f64
            };
            if out[t] < floor {
                fixed[t] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

pub fn fit_propensity(
    data: &Dataset,
    spec: &PropensitySpec,
    clip_floor: f64,
    features: &FeatureMap,
) -> Result<PropensityModel> {
    let k = data.treatment_count();
    if !(clip_floor > 0.0 && clip_floor < 0.5) {
        return Err(Error::invalid(format!(
            "clip_floor must lie in (0, 0.5), got {clip_floor}"
        )));
    }
    if k as f64 * clip_floor >= 1.0 {
        return Err(Error::invalid(format!(
            "clip_floor {clip_floor} is too large for {k} treatments"
        )));
    }
    let mut seen = vec![false; k];
    data.rows().iter().for_each(|r| seen[r.treatment] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::SingleTreatment);
    }
    if features.covariate_dim != data.feature_dim() {
        return Err(Error::dims("feature map does not match the data"));
    }
    let dim = features.dim();
    let x = features.design(data)?;
    let labels: Vec<usize> = data.rows().iter().map(|r| r.treatment).collect();
    let state = match spec {
        PropensitySpec::MultinomialLogistic { max_iter } => {
            PropensityState::MultinomialLogistic(LogisticModel::fit(&x, dim, &labels, k, *max_iter))
        }
        PropensitySpec::ClassificationTree {
            max_depth,
            min_leaf,
        } => PropensityState::ClassificationTree(DecisionTree::fit_classification(
            &x, dim, &labels, k, None, *max_depth, *min_leaf,
        )),
    };
    Ok(PropensityModel {
        treatment_count: k,
        clip_floor,
        features: features.clone(),
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_keeps_simplex() {
        let p = clip_probabilities(&[0.999, 0.001, 0.0], 0.01);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.01));
        assert_eq!(p[1], 0.01);
        assert_eq!(p[2], 0.01);
        // Untouched when already above the floor.
        assert_eq!(clip_probabilities(&[0.5, 0.5], 0.01), vec![0.5, 0.5]);
    }

    #[test]
    fn cascading_clip() {
        // Rescaling after the first pass pushes the second entry below the floor.
        let p = clip_probabilities(&[0.0, 0.0101, 0.9899], 0.01);
        assert!(p.iter().all(|&v| v >= 0.01 - 1e-15), "{p:?}");
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
