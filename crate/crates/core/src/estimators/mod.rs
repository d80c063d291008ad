//! Per-treatment outcome models, propensity models and weighted calibration.

mod calibration;
mod knn;
mod linear;
mod logistic;
mod propensity;
mod tree;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Row};
use crate::error::{Error, Result};

pub use calibration::{weighted_calibration, CalibrationBucket, CalibrationCurve};
pub use knn::KnnModel;
pub use linear::LinearModel;
pub use logistic::LogisticModel;
pub use propensity::{
    clip_probabilities, fit_propensity, PropensityModel, PropensitySpec, PropensityState, DEFAULT_CLIP_FLOOR,
};
pub use tree::{DecisionTree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    Direct,
    Ipw,
    Dr,
}

impl fmt::Display for Adjustment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adjustment::Direct => "direct",
            Adjustment::Ipw => "ipw",
            Adjustment::Dr => "dr",
        })
    }
}

fn default_max_depth() -> usize {
    8
}

fn default_min_leaf() -> usize {
    20
}

/// Model class and hyperparameters for outcome regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `k` defaults to `round(√(training rows))`.
    Knn {
        #[serde(default)]
        k: Option<usize>,
    },
    Ols {},
    Lasso {
        alpha: f64,
    },
    Tree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
}

impl ModelSpec {
    pub fn tree() -> Self {
        ModelSpec::Tree {
            max_depth: default_max_depth(),
            min_leaf: default_min_leaf(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::Ols {} => "ols",
            ModelSpec::Lasso { .. } => "lasso",
            ModelSpec::Tree { .. } => "tree",
        }
    }
}

/// How a row becomes a model input: its covariates, optionally followed by a
/// drop-first one-hot encoding of the group label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMap {
    pub covariate_dim: usize,
    #[serde(default)]
    pub group_levels: Option<Vec<String>>,
}

impl FeatureMap {
    pub fn covariates(covariate_dim: usize) -> Self {
        Self {
            covariate_dim,
            group_levels: None,
        }
    }

    /// Covariates plus group indicators for every level in `data`.
    pub fn with_groups(data: &Dataset) -> Self {
        Self {
            covariate_dim: data.feature_dim(),
            group_levels: Some(data.group_labels().iter().cloned().collect()),
        }
    }

    pub fn for_data(data: &Dataset, group_as_feature: bool) -> Self {
        if group_as_feature {
            Self::with_groups(data)
        } else {
            Self::covariates(data.feature_dim())
        }
    }

    pub fn dim(&self) -> usize {
        self.covariate_dim + self.group_levels.as_ref().map_or(0, |l| l.len().saturating_sub(1))
    }

    pub fn push_features(&self, x: &[f64], group: &str, out: &mut Vec<f64>) -> Result<()> {
        if x.len() != self.covariate_dim {
            return Err(Error::dims(format!(
                "model expects {} covariates, got {}",
                self.covariate_dim,
                x.len()
            )));
        }
        out.extend_from_slice(x);
        if let Some(levels) = &self.group_levels {
            let level = levels
                .iter()
                .position(|l| l == group)
                .ok_or_else(|| Error::UnknownGroup(group.to_string()))?;
            out.extend((1..levels.len()).map(|j| if j == level { 1.0 } else { 0.0 }));
        }
        Ok(())
    }

    pub fn features(&self, x: &[f64], group: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.push_features(x, group, &mut out)?;
        Ok(out)
    }

    /// Row-major design matrix for all rows of `data`.
    pub fn design(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(data.len() * self.dim());
        for row in data.rows() {
            self.push_features(&row.covariates, &row.group, &mut out)?;
        }
        Ok(out)
    }
}

/// A fitted regression function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Knn(KnnModel),
    Ols(LinearModel),
    Lasso(LinearModel),
    Tree(DecisionTree),
}

impl Regressor {
    pub fn fit(
        spec: &ModelSpec,
        x: &[f64],
        dim: usize,
        y: &[f64],
        weights: Option<&[f64]>,
        treatment: usize,
    ) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyArm(treatment));
        }
        if x.len() != y.len() * dim || weights.is_some_and(|w| w.len() != y.len()) {
            return Err(Error::dims("design, targets and weights disagree in length"));
        }
        Ok(match spec {
            ModelSpec::Knn { k } => {
                let k = k.unwrap_or_else(|| ((y.len() as f64).sqrt().round() as usize).max(1));
                if k == 0 {
                    return Err(Error::invalid("k must be at least 1"));
                }
                Regressor::Knn(KnnModel::fit(x, dim, y, weights, k))
            }
            ModelSpec::Ols {} => Regressor::Ols(LinearModel::fit_ols(x, dim, y, weights, treatment)?),
            ModelSpec::Lasso { alpha } => {
                if !(*alpha >= 0.0 && alpha.is_finite()) {
                    return Err(Error::invalid(format!("lasso alpha must be ≥ 0, got {alpha}")));
                }
                Regressor::Lasso(LinearModel::fit_lasso(x, dim, y, weights, *alpha))
            }
            ModelSpec::Tree {
                max_depth,
                min_leaf,
            } => Regressor::Tree(DecisionTree::fit_regression(
                x, dim, y, weights, *max_depth, *min_leaf,
            )),
        })
    }

    #[inline]
    pub fn predict(&self, features: &[f64]) -> f64 {
        match self {
            Regressor::Knn(m) => m.predict(features),
            Regressor::Ols(m) | Regressor::Lasso(m) => m.predict(features),
            Regressor::Tree(m) => m.predict(features)[0],
        }
    }
}

/// Fitted `m̂ᵗ` for one treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePredictor {
    pub treatment: usize,
    pub adjustment: Adjustment,
    pub features: FeatureMap,
    pub model: Regressor,
}

impl OutcomePredictor {
    pub fn predict(&self, x: &[f64], group: &str) -> Result<f64> {
        Ok(self.model.predict(&self.features.features(x, group)?))
    }
}

/// One predictor per treatment, index = treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeModelSet {
    predictors: Vec<OutcomePredictor>,
}

impl OutcomeModelSet {
    pub fn new(predictors: Vec<OutcomePredictor>) -> Result<Self> {
        if predictors.is_empty() {
            return Err(Error::invalid("model set is empty"));
        }
        for (t, p) in predictors.iter().enumerate() {
            if p.treatment != t {
                return Err(Error::invalid(format!(
                    "predictor at position {t} is for treatment {}",
                    p.treatment
                )));
            }
            if p.features != predictors[0].features {
                return Err(Error::invalid("predictors use different feature maps"));
            }
        }
        Ok(Self { predictors })
    }

    pub fn predictors(&self) -> &[OutcomePredictor] {
        &self.predictors
    }

    pub fn treatment_count(&self) -> usize {
        self.predictors.len()
    }

    pub fn features(&self) -> &FeatureMap {
        &self.predictors[0].features
    }

    /// `(m̂⁰(x), …, m̂ᵐ(x))`.
    pub fn predict(&self, x: &[f64], group: &str) -> Result<Vec<f64>> {
        let f = self.features().features(x, group)?;
        Ok(self.predictors.iter().map(|p| p.model.predict(&f)).collect())
    }

    /// Row-major `n × (m+1)` predictions for every row of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict_rows(data.rows())
    }

    pub fn predict_rows(&self, rows: &[Row]) -> Result<Vec<f64>> {
        let k = self.treatment_count();
        let chunks: Vec<Result<Vec<f64>>> = rows
            .par_chunks(1024)
            .map(|chunk| {
                let mut out = Vec::with_capacity(chunk.len() * k);
                let mut f = Vec::with_capacity(self.features().dim());
                for row in chunk {
                    f.clear();
                    self.features().push_features(&row.covariates, &row.group, &mut f)?;
                    out.extend(self.predictors.iter().map(|p| p.model.predict(&f)));
                }
                Ok(out)
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len() * k);
        for chunk in chunks {
            out.extend(chunk?);
        }
        Ok(out)
    }
}

/// Fit one outcome model per treatment.
///
/// `direct` fits on each arm; `ipw` fits on each arm with weights `1/p̂ᵗ(x)`;
/// `dr` regresses the doubly robust pseudo-outcomes of all rows.
pub fn fit_outcome_models(
    data: &Dataset,
    spec: &ModelSpec,
    adjustment: Adjustment,
    propensity: Option<&PropensityModel>,
    features: &FeatureMap,
) -> Result<OutcomeModelSet> {
    if features.covariate_dim != data.feature_dim() {
        return Err(Error::dims(format!(
            "feature map expects {} covariates, data has {}",
            features.covariate_dim,
            data.feature_dim()
        )));
    }
    if adjustment != Adjustment::Direct && propensity.is_none() {
        return Err(Error::MissingPropensity(adjustment));
    }
    let k = data.treatment_count();
    if let Some(p) = propensity {
        if p.treatment_count() != k {
            return Err(Error::dims(format!(
                "propensity model covers {} treatments, data has {k}",
                p.treatment_count()
            )));
        }
    }
    let dim = features.dim();
    let design = features.design(data)?;
    let rows = data.rows();

    let fit_arm = |t: usize, weighted: bool| -> Result<Regressor> {
        let arm = data.arm(t);
        if arm.is_empty() {
            return Err(Error::EmptyArm(t));
        }
        let mut x = Vec::with_capacity(arm.len() * dim);
        for &i in &arm {
            x.extend_from_slice(&design[i * dim..(i + 1) * dim]);
        }
        let y: Vec<f64> = arm.iter().map(|&i| rows[i].outcome).collect();
        let w = if weighted {
            let p = propensity.expect("checked above");
            Some(
                arm.iter()
                    .map(|&i| Ok(1.0 / p.predict_features(&design[i * dim..(i + 1) * dim])[t]))
                    .collect::<Result<Vec<f64>>>()?,
            )
        } else {
            None
        };
        Regressor::fit(spec, &x, dim, &y, w.as_deref(), t)
    };
    let wrap = |models: Vec<Regressor>| {
        OutcomeModelSet::new(
            models
                .into_iter()
                .enumerate()
                .map(|(treatment, model)| OutcomePredictor {
                    treatment,
                    adjustment,
                    features: features.clone(),
                    model,
                })
                .collect(),
        )
    };

    match adjustment {
        Adjustment::Direct | Adjustment::Ipw => {
            let weighted = adjustment == Adjustment::Ipw;
            let models = (0..k)
                .into_par_iter()
                .map(|t| fit_arm(t, weighted))
                .collect::<Result<Vec<_>>>()?;
            wrap(models)
        }
        Adjustment::Dr => {
            let direct = (0..k)
                .into_par_iter()
                .map(|t| fit_arm(t, false))
                .collect::<Result<Vec<_>>>()?;
            let p = propensity.expect("checked above");
            let pseudo = dr_pseudo_outcomes_with(
                data,
                |t, i| direct[t].predict(&design[i * dim..(i + 1) * dim]),
                |i| p.predict_features(&design[i * dim..(i + 1) * dim]),
            );
            let models = (0..k)
                .into_par_iter()
                .map(|t| Regressor::fit(spec, &design, dim, &pseudo[t], None, t))
                .collect::<Result<Vec<_>>>()?;
            wrap(models)
        }
    }
}

/// Doubly robust pseudo-outcomes `Ŷᵢᵗ = m(t, i) + 𝟙[Tᵢ = t]/p(i)ₜ · (Yᵢ − m(t, i))`
/// for every row and treatment, indexed `[t][i]`.
pub fn dr_pseudo_outcomes_with(
    data: &Dataset,
    mean: impl Fn(usize, usize) -> f64,
    propensity: impl Fn(usize) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let k = data.treatment_count();
    let mut out = vec![Vec::with_capacity(data.len()); k];
    for (i, row) in data.rows().iter().enumerate() {
        let p = propensity(i);
        for (t, column) in out.iter_mut().enumerate() {
            let m = mean(t, i);
            let correction = if row.treatment == t {
                (row.outcome - m) / p[t]
            } else {
                0.0
            };
            column.push(m + correction);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::Scenario;

    fn single_point() -> Dataset {
        Dataset::new(
            vec![
                Row {
                    id: "0".into(),
                    covariates: vec![0.0, 0.0],
                    group: "g".into(),
                    treatment: 0,
                    outcome: 1.0,
                    potential_outcomes: None,
                },
                Row {
                    id: "1".into(),
                    covariates: vec![5.0, 5.0],
                    group: "g".into(),
                    treatment: 1,
                    outcome: -2.0,
                    potential_outcomes: None,
                },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn one_nn_interpolates() {
        let data = single_point();
        let models = fit_outcome_models(
            &data,
            &ModelSpec::Knn { k: Some(1) },
            Adjustment::Direct,
            None,
            &FeatureMap::covariates(2),
        )
        .unwrap();
        assert_eq!(models.predictors()[0].predict(&[0.0, 0.0], "g").unwrap(), 1.0);
    }

    #[test]
    fn ipw_without_propensity_is_rejected() {
        let data = single_point();
        for adj in [Adjustment::Ipw, Adjustment::Dr] {
            assert!(matches!(
                fit_outcome_models(&data, &ModelSpec::Ols {}, adj, None, &FeatureMap::covariates(2)),
                Err(Error::MissingPropensity(_))
            ));
        }
    }

    #[test]
    fn empty_arm_is_named() {
        let data = Dataset::new(single_point().rows().to_vec(), Some(3)).unwrap();
        let err = fit_outcome_models(
            &data,
            &ModelSpec::Knn { k: None },
            Adjustment::Direct,
            None,
            &FeatureMap::covariates(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyArm(2)));
    }

    #[test]
    fn group_one_hot_drops_first_level() {
        let map = FeatureMap {
            covariate_dim: 1,
            group_levels: Some(vec!["a".into(), "b".into(), "c".into()]),
        };
        assert_eq!(map.features(&[2.0], "a").unwrap(), vec![2.0, 0.0, 0.0]);
        assert_eq!(map.features(&[2.0], "c").unwrap(), vec![2.0, 0.0, 1.0]);
        assert!(matches!(map.features(&[2.0], "z"), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn ols_recovers_linear_arm() {
        let scenario = Scenario::linear(0.1);
        let data = scenario.generate(10_000, 11).unwrap();
        let models = fit_outcome_models(
            &data,
            &ModelSpec::Ols {},
            Adjustment::Direct,
            None,
            &FeatureMap::covariates(2),
        )
        .unwrap();
        let Regressor::Ols(fit) = &models.predictors()[1].model else { panic!() };
        assert!((fit.coef[0] - 0.75).abs() < 0.02, "{:?}", fit.coef);
        assert!((fit.coef[1] - 0.75).abs() < 0.02, "{:?}", fit.coef);
        assert!(fit.intercept.abs() < 0.02, "{}", fit.intercept);
    }

    #[test]
    fn model_spec_json() {
        let spec: ModelSpec = serde_json::from_str(r#"{"kind":"tree"}"#).unwrap();
        assert_eq!(spec, ModelSpec::tree());
        let spec: ModelSpec = serde_json::from_str(r#"{"kind":"lasso","alpha":0.6}"#).unwrap();
        assert_eq!(spec, ModelSpec::Lasso { alpha: 0.6 });
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"ols","alpha":1}"#).is_err());
    }
}
