//! The JSON run configuration. One file may carry sections for several
//! subcommands; each subcommand reads only its own.

use std::path::{Path, PathBuf};

use dualprice::estimators::DEFAULT_CLIP_FLOOR;
use dualprice::simulator::ArrivalProcess;
use dualprice::synthetic::GroupRule;
use dualprice::{Adjustment, EstimatorConfig, FairnessSpec, ModelSpec, PropensitySpec, ScenarioKind, SolveOptions};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_clip_floor() -> f64 {
    DEFAULT_CLIP_FLOOR
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Used by stochastic commands unless `--seed` is given.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub gen: Option<GenConfig>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub assign: Option<AssignConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub evaluate: Option<EvaluateConfig>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub demo: Option<DemoConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub scenario: ScenarioKind,
    pub sigma: f64,
    pub n: usize,
    #[serde(default)]
    pub groups: Option<GroupRule>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    pub model: ModelSpec,
    pub adjustment: Adjustment,
    #[serde(default)]
    pub propensity: Option<PropensitySpec>,
    #[serde(default = "default_clip_floor")]
    pub clip_floor: f64,
    /// Append drop-first group indicators to the model features.
    #[serde(default)]
    pub group_as_feature: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub data: PathBuf,
    pub models: PathBuf,
    pub capacities: Vec<f64>,
    #[serde(default)]
    pub fairness: FairnessSpec,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignConfig {
    pub policy: PathBuf,
    /// CSV with `id`, `x0..`, and optionally `group`; other columns are ignored.
    pub data: PathBuf,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateConfig {
    Resample { data: PathBuf },
    Explicit { data: PathBuf },
    Synthetic {
        scenario: ScenarioKind,
        sigma: f64,
        #[serde(default)]
        groups: Option<GroupRule>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimOutcomeConfig {
    None {},
    /// Scenario means when `scenario` is set, else the policy's predictions.
    TrueMeans {
        #[serde(default)]
        scenario: Option<ScenarioKind>,
    },
    SampledPotential {},
}

impl Default for SimOutcomeConfig {
    fn default() -> Self {
        Self::None {}
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub policy: PathBuf,
    pub covariates: CovariateConfig,
    pub horizon: f64,
    /// Individuals per day; resources default to Poisson at `bᵗ · rate`.
    pub arrival_rate: f64,
    #[serde(default)]
    pub resources: Option<Vec<ArrivalProcess>>,
    #[serde(default)]
    pub individuals: Option<ArrivalProcess>,
    #[serde(default)]
    pub outcomes: SimOutcomeConfig,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub queue_grid_step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalOutcomeConfig {
    TrueMeans { scenario: ScenarioKind },
    PotentialOutcomes {},
    Model {},
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub policy: PathBuf,
    pub data: PathBuf,
    pub outcomes: EvalOutcomeConfig,
    /// Fairness spec for the report; defaults to the artifact's.
    #[serde(default)]
    pub fairness: Option<FairnessSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub scenario: ScenarioKind,
    pub sigmas: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub estimators: Vec<EstimatorConfig>,
    pub replications: usize,
    pub test_size: usize,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub include_random: bool,
}

fn demo_n() -> usize {
    2_000
}

fn demo_horizon() -> f64 {
    200.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub scenario: ScenarioKind,
    pub sigma: f64,
    #[serde(default = "demo_n")]
    pub n: usize,
    #[serde(default = "demo_n")]
    pub test_size: usize,
    #[serde(default = "demo_horizon")]
    pub horizon: f64,
}

/// A parsed config with its location and fingerprint.
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    pub fingerprint: String,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(Self {
            config,
            base,
            fingerprint: hex::encode(Sha256::digest(&bytes)),
        })
    }

    /// `path` relative to the config file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }
}

/// The section for `command`, or a config error naming it.
pub fn section<'a, T>(value: &'a Option<T>, command: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("config has no `{command}` section")))
}
