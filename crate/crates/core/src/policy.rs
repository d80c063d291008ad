//! The deployable scoring rule and its persisted artifact.
//!
//! An individual with covariates `x` in group `g` is assigned the first
//! argmax of the adjusted scores (see [`crate::dual::PriceAdjuster`]).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::argmax_first;
use crate::dual::{Capacities, DualSolution, FairnessSpec, PriceAdjuster};
use crate::error::{Error, Result};
use crate::estimators::{OutcomeModelSet, PropensityModel};
use crate::io::write_atomic;
use crate::rng::{GENERATOR_NAME, NORMAL_TRANSFORM};

pub const SCHEMA_VERSION: u32 = 1;

/// Provenance recorded with every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    /// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` when set so
    /// that repeated runs stay byte-identical; otherwise absent.
    pub created_unix: Option<u64>,
    pub seed: Option<u64>,
    pub data_fingerprint: Option<String>,
    pub config_fingerprint: Option<String>,
    pub library_version: String,
    pub rng: String,
    pub normal_transform: String,
}

impl Metadata {
    pub fn new(seed: Option<u64>, data_fingerprint: Option<String>) -> Self {
        Self {
            created_unix: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|v| v.trim().parse().ok()),
            seed,
            data_fingerprint,
            config_fingerprint: None,
            library_version: crate::LIBRARY_VERSION.to_string(),
            rng: GENERATOR_NAME.to_string(),
            normal_transform: NORMAL_TRANSFORM.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyArtifact {
    pub schema_version: u32,
    pub models: OutcomeModelSet,
    pub dual: DualSolution,
    pub fairness: FairnessSpec,
    pub capacities: Capacities,
    pub metadata: Metadata,
}

impl PolicyArtifact {
    pub fn new(
        models: OutcomeModelSet,
        dual: DualSolution,
        capacities: Capacities,
        metadata: Metadata,
    ) -> Result<Self> {
        let artifact = Self {
            schema_version: SCHEMA_VERSION,
            fairness: dual.fairness.clone(),
            models,
            dual,
            capacities,
            metadata,
        };
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.capacities.len();
        if self.models.treatment_count() != k || self.dual.mu.len() != k {
            return Err(Error::dims(format!(
                "artifact covers {} models and {} prices for {k} capacities",
                self.models.treatment_count(),
                self.dual.mu.len()
            )));
        }
        if self.dual.fairness != self.fairness {
            return Err(Error::InvalidFairness(
                "dual solution was solved under a different fairness spec".into(),
            ));
        }
        if self.dual.mu[0] != 0.0 || self.dual.mu.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::invalid("prices must be nonnegative with μ⁰ = 0"));
        }
        if self.dual.lambda.iter().any(|l| !(l.value >= 0.0)) {
            return Err(Error::invalid("fairness multipliers must be nonnegative"));
        }
        self.dual.adjuster().map(|_| ())
    }

    pub fn policy(&self) -> Result<Policy> {
        Policy::new(self.models.clone(), &self.dual)
    }
}

/// A compiled policy: outcome models plus the price adjustment.
#[derive(Debug, Clone)]
pub struct Policy {
    models: OutcomeModelSet,
    adjuster: PriceAdjuster,
}

impl Policy {
    pub fn new(models: OutcomeModelSet, dual: &DualSolution) -> Result<Self> {
        let adjuster = dual.adjuster()?;
        if adjuster.width() != models.treatment_count() {
            return Err(Error::dims("prices and models cover different treatments"));
        }
        Ok(Self { models, adjuster })
    }

    pub fn models(&self) -> &OutcomeModelSet {
        &self.models
    }

    pub fn adjuster(&self) -> &PriceAdjuster {
        &self.adjuster
    }

    pub fn treatment_count(&self) -> usize {
        self.models.treatment_count()
    }

    pub fn adjusted_scores(&self, x: &[f64], group: &str) -> Result<Vec<f64>> {
        let g = self.adjuster.group_index(group)?;
        Ok(self.adjuster.adjust(&self.models.predict(x, group)?, g))
    }

    pub fn assign(&self, x: &[f64], group: &str) -> Result<usize> {
        Ok(argmax_first(&self.adjusted_scores(x, group)?))
    }

    /// Adjusted scores from precomputed predictions `m̂(x)`.
    pub fn adjust_predictions(&self, predictions: &[f64], group: &str) -> Result<Vec<f64>> {
        let g = self.adjuster.group_index(group)?;
        Ok(self.adjuster.adjust(predictions, g))
    }
}

pub fn adjusted_scores(artifact: &PolicyArtifact, x: &[f64], group: &str) -> Result<Vec<f64>> {
    artifact.policy()?.adjusted_scores(x, group)
}

pub fn assign(artifact: &PolicyArtifact, x: &[f64], group: &str) -> Result<usize> {
    artifact.policy()?.assign(x, group)
}

/// Fitted models before a dual solve, as written by the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub models: OutcomeModelSet,
    #[serde(default)]
    pub propensity: Option<PropensityModel>,
    pub metadata: Metadata,
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Parse a versioned JSON document, checking `schema_version` first.
pub fn from_versioned_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse("missing integer schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn save_artifact(artifact: &PolicyArtifact, path: impl AsRef<Path>) -> Result<()> {
    artifact.validate()?;
    write_atomic(path.as_ref(), &to_json_bytes(artifact)?)
}

pub fn load_artifact(path: impl AsRef<Path>) -> Result<PolicyArtifact> {
    let artifact: PolicyArtifact = from_versioned_json(&std::fs::read(path.as_ref())?)?;
    artifact.validate()?;
    Ok(artifact)
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &to_json_bytes(bundle)?)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    from_versioned_json(&std::fs::read(path.as_ref())?)
}
