//! The synthetic sweep: estimator × σ × training size × replication, each
//! cell scored by its performance ratio against perfect foresight on a
//! held-out pool.
//!
//! Replications share random numbers across cells. Replication r draws one
//! test pool and one training set at the largest size per σ; smaller sizes
//! are prefixes, and σ only scales the noise of a common draw.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dual::{solve, Capacities, DualSolution, FairnessSpec, ScoreMatrix, SolveOptions};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_outcome_models, fit_propensity, Adjustment, FeatureMap, ModelSpec, PropensitySpec,
};
use crate::evaluation::{mean_selected, outcome_matrix, perfect_foresight, policy_assignment, Baseline, OutcomeSource};
use crate::io::csv_bytes;
use crate::policy::Policy;
use crate::rng::Stream;
use crate::synthetic::{Scenario, ScenarioKind};

fn default_clip_floor() -> f64 {
    crate::estimators::DEFAULT_CLIP_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub model: ModelSpec,
    pub adjustment: Adjustment,
    /// Required by `ipw` and `dr`.
    #[serde(default)]
    pub propensity: Option<PropensitySpec>,
    #[serde(default = "default_clip_floor")]
    pub clip_floor: f64,
}

impl EstimatorConfig {
    pub fn direct(model: ModelSpec) -> Self {
        Self {
            model,
            adjustment: Adjustment::Direct,
            propensity: None,
            clip_floor: default_clip_floor(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.model.name(), self.adjustment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: ScenarioKind,
    pub sigmas: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub estimators: Vec<EstimatorConfig>,
    pub replications: usize,
    pub test_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub solve: SolveOptions,
    /// Also score the random baseline once per replication.
    #[serde(default)]
    pub include_random: bool,
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.train_sizes.is_empty() || self.estimators.is_empty() {
            return Err(Error::invalid("sweep needs at least one sigma, size and estimator"));
        }
        if self.replications == 0 || self.test_size == 0 || self.train_sizes.contains(&0) {
            return Err(Error::invalid("replications, test_size and train sizes must be positive"));
        }
        for &s in &self.sigmas {
            Scenario::new(self.scenario, s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub estimator: String,
    pub sigma: f64,
    pub n_train: usize,
    pub replication: usize,
    pub policy_outcome: f64,
    pub perfect_foresight_outcome: f64,
    pub ratio: Option<f64>,
    /// False when the dual solve hit its cut budget and the best point found
    /// was used instead.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub estimator: String,
    pub sigma: f64,
    pub n_train: usize,
    pub replications: usize,
    pub mean_ratio: f64,
    pub std_error: f64,
}

/// The held-out pool of one replication with its true-mean matrix.
struct TestPool {
    data: Dataset,
    values: Vec<f64>,
    foresight: f64,
}

fn replication_seeds(seed: u64, r: usize) -> (u64, u64, u64) {
    let mut s = Stream::derive(seed, r as u64);
    (s.next_u64(), s.next_u64(), s.next_u64())
}

/// Solve for a policy from a training set; on budget exhaustion fall back to
/// the best point found.
pub fn learn_policy(
    train: &Dataset,
    estimator: &EstimatorConfig,
    capacities: &Capacities,
    fairness: &FairnessSpec,
    options: &SolveOptions,
) -> Result<(Policy, DualSolution, bool)> {
    let features = FeatureMap::covariates(train.feature_dim());
    let propensity = match (&estimator.propensity, estimator.adjustment) {
        (_, Adjustment::Direct) => None,
        (Some(spec), _) => Some(fit_propensity(train, spec, estimator.clip_floor, &features)?),
        (None, adj) => return Err(Error::MissingPropensity(adj)),
    };
    let models = fit_outcome_models(
        train,
        &estimator.model,
        estimator.adjustment,
        propensity.as_ref(),
        &features,
    )?;
    let k = models.treatment_count();
    let scores = ScoreMatrix::from_flat(models.predict_dataset(train)?, k, train.groups())?;
    let (dual, converged) = match solve(&scores, capacities, fairness, options) {
        Ok(d) => (d, true),
        Err(Error::NotConverged { best, .. }) => (*best, false),
        Err(e) => return Err(e),
    };
    Ok((Policy::new(models, &dual)?, dual, converged))
}

pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let max_train = *config.train_sizes.iter().max().expect("validated");
    let first = Scenario::new(config.scenario, config.sigmas[0])?;
    let capacities = Capacities::new(first.capacities().to_vec())?;

    let per_rep: Vec<Vec<SweepRecord>> = (0..config.replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<SweepRecord>> {
            let (test_seed, train_seed, random_seed) = replication_seeds(config.seed, r);
            // Covariates and true means do not depend on σ.
            let data = first.generate(config.test_size, test_seed)?;
            let values = outcome_matrix(&OutcomeSource::TrueMeans(first), &data)?;
            let (_, total) = perfect_foresight(&values, &capacities)?;
            let pool = TestPool {
                foresight: total / data.len() as f64,
                data,
                values,
            };
            let k = capacities.len();
            let mut records = Vec::new();
            if config.include_random {
                let a = Baseline::Random { seed: random_seed }.assignment(&pool.data, &capacities)?;
                records.push(record("random", 0.0, 0, r, mean_selected(&pool.values, k, &a), &pool, true));
            }
            for &sigma in &config.sigmas {
                let scenario = Scenario::new(config.scenario, sigma)?;
                let full = scenario.generate(max_train, train_seed)?;
                let cells: Vec<(usize, &EstimatorConfig)> = config
                    .train_sizes
                    .iter()
                    .flat_map(|&n| config.estimators.iter().map(move |e| (n, e)))
                    .collect();
                let scored: Vec<SweepRecord> = cells
                    .into_par_iter()
                    .map(|(n, est)| -> Result<SweepRecord> {
                        let train = full.head(n)?;
                        let (policy, _, converged) = learn_policy(
                            &train,
                            est,
                            &capacities,
                            &FairnessSpec::None {},
                            &config.solve,
                        )?;
                        let a = policy_assignment(&policy, &pool.data, &capacities)?;
                        let outcome = mean_selected(&pool.values, k, &a);
                        Ok(record(&est.label(), sigma, n, r, outcome, &pool, converged))
                    })
                    .collect::<Result<_>>()?;
                records.extend(scored);
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

fn record(
    estimator: &str,
    sigma: f64,
    n_train: usize,
    replication: usize,
    policy_outcome: f64,
    pool: &TestPool,
    converged: bool,
) -> SweepRecord {
    SweepRecord {
        estimator: estimator.to_string(),
        sigma,
        n_train,
        replication,
        policy_outcome,
        perfect_foresight_outcome: pool.foresight,
        ratio: (pool.foresight != 0.0).then(|| policy_outcome / pool.foresight),
        converged,
    }
}

/// Mean ratio and its standard error per (estimator, σ, size), in first-seen
/// order. Records without a ratio are skipped.
pub fn summarize(records: &[SweepRecord]) -> Vec<SweepSummary> {
    let mut keys: Vec<(String, f64, usize)> = Vec::new();
    for r in records {
        let key = (r.estimator.clone(), r.sigma, r.n_train);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(estimator, sigma, n_train)| {
            let ratios: Vec<f64> = records
                .iter()
                .filter(|r| r.estimator == estimator && r.sigma == sigma && r.n_train == n_train)
                .filter_map(|r| r.ratio)
                .collect();
            if ratios.is_empty() {
                return None;
            }
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let var = if ratios.len() > 1 {
                ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Some(SweepSummary {
                estimator,
                sigma,
                n_train,
                replications: ratios.len(),
                mean_ratio: mean,
                std_error: (var / n).sqrt(),
            })
        })
        .collect()
}

pub fn records_csv(records: &[SweepRecord]) -> Result<Vec<u8>> {
    csv_bytes(
        &["estimator", "sigma", "n_train", "replication", "policy_outcome", "perfect_foresight_outcome", "ratio", "converged"],
        records.iter().map(|r| {
            vec![
                r.estimator.clone(),
                r.sigma.to_string(),
                r.n_train.to_string(),
                r.replication.to_string(),
                r.policy_outcome.to_string(),
                r.perfect_foresight_outcome.to_string(),
                r.ratio.map_or(String::new(), |v| v.to_string()),
                r.converged.to_string(),
            ]
        }),
    )
}

pub fn summary_csv(summary: &[SweepSummary]) -> Result<Vec<u8>> {
    csv_bytes(
        &["estimator", "sigma", "n_train", "replications", "mean_ratio", "std_error"],
        summary.iter().map(|s| {
            vec![
                s.estimator.clone(),
                s.sigma.to_string(),
                s.n_train.to_string(),
                s.replications.to_string(),
                s.mean_ratio.to_string(),
                s.std_error.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            scenario: ScenarioKind::Linear,
            sigmas: vec![0.1, 1.5],
            train_sizes: vec![200, 400],
            estimators: vec![EstimatorConfig::direct(ModelSpec::Ols {})],
            replications: 2,
            test_size: 2_000,
            seed: 11,
            solve: SolveOptions::default(),
            include_random: true,
        }
    }

    #[test]
    fn sweep_is_deterministic_and_complete() {
        let cfg = small();
        let a = run_sweep(&cfg).unwrap();
        assert_eq!(a, run_sweep(&cfg).unwrap());
        // 2 reps × (1 random + 2 σ × 2 sizes × 1 estimator)
        assert_eq!(a.len(), 10);
        for r in &a {
            assert!(r.ratio.unwrap() <= 1.0 + 1e-12, "{r:?}");
        }
        let s = summarize(&a);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|s| s.replications == 2));
        let text = String::from_utf8(summary_csv(&s).unwrap()).unwrap();
        assert!(text.starts_with("estimator,sigma,n_train,replications,mean_ratio,std_error\n"));
    }

    #[test]
    fn ipw_without_propensity_is_rejected() {
        let mut cfg = small();
        cfg.estimators[0].adjustment = Adjustment::Ipw;
        assert!(matches!(run_sweep(&cfg), Err(Error::MissingPropensity(Adjustment::Ipw))));
    }
}
