use std::path::{Path, PathBuf};
use std::sync::Arc;

use dualprice::evaluation::{outcome_matrix, policy_assignment};
use dualprice::experiment::{records_csv, summary_csv};
use dualprice::io::{csv_bytes, write_atomic};
use dualprice::policy::{load_bundle, save_bundle, to_json_bytes, ModelBundle, SCHEMA_VERSION};
use dualprice::rng::Stream;
use dualprice::simulator::{aggregate, run_replications, CovariateSource, Individual, OutcomeMode};
use dualprice::synthetic::GroupRule;
use dualprice::{
    evaluate_policy, fairness_report, fit_outcome_models, fit_propensity, kkt_report, load_artifact,
    run_sweep, save_artifact, solve, summarize, Adjustment, Capacities, Dataset, EvalReport, Error, FeatureMap, Metadata, ModelSpec, OutcomeSource, PolicyArtifact, Scenario,
    ScoreMatrix, SimConfig, SweepConfig,
};
use serde::Serialize;

use crate::config::{section, CovariateConfig, EvalOutcomeConfig, Loaded, SimOutcomeConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Shared state of one invocation.
pub struct Run {
    pub loaded: Loaded,
    pub out: PathBuf,
    pub seed_override: Option<u64>,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: Option<u64>,
    config_fingerprint: &'a str,
    library_version: &'a str,
    outputs: &'a [String],
}

impl Run {
    pub fn new(loaded: Loaded, out: PathBuf, seed_override: Option<u64>) -> Self {
        Self {
            loaded,
            out,
            seed_override,
            outputs: Vec::new(),
        }
    }

    fn seed_opt(&self) -> Option<u64> {
        self.seed_override.or(self.loaded.config.seed)
    }

    fn seed(&self, command: &str) -> Result<u64> {
        self.seed_opt()
            .ok_or_else(|| CliError::Config(format!("`{command}` is stochastic and needs a seed (config `seed` or --seed)")))
    }

    fn input(&self, path: &Path) -> PathBuf {
        self.loaded.resolve(path)
    }

    fn metadata(&self, data: Option<&Dataset>) -> Metadata {
        let mut m = Metadata::new(self.seed_opt(), data.map(Dataset::fingerprint));
        m.config_fingerprint = Some(self.loaded.fingerprint.clone());
        m
    }

    fn target(&mut self, name: &Path) -> PathBuf {
        self.outputs.push(name.display().to_string());
        self.out.join(name)
    }

    fn write(&mut self, name: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let path = self.target(name.as_ref());
        Ok(write_atomic(&path, bytes)?)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let bytes = to_json_bytes(value)?;
        self.write(name, &bytes)
    }

    /// Write `<command>.run.json` and print it as one line.
    pub fn finish(&mut self, command: &str) -> Result<()> {
        let outputs = self.outputs.clone();
        let manifest = Manifest {
            command,
            seed: self.seed_opt(),
            config_fingerprint: &self.loaded.fingerprint,
            library_version: dualprice::LIBRARY_VERSION,
            outputs: &outputs,
        };
        let bytes = to_json_bytes(&manifest)?;
        write_atomic(&self.out.join(format!("{command}.run.json")), &bytes)?;
        println!("{}", serde_json::to_string(&manifest).map_err(Error::from)?);
        Ok(())
    }
}

fn name_or(path: &Option<PathBuf>, default: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| PathBuf::from(default))
}

pub fn gen(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.gen, "gen")?.clone();
    let seed = run.seed("gen")?;
    let scenario = Scenario::new(cfg.scenario, cfg.sigma)?;
    let rule = cfg.groups.unwrap_or(GroupRule::Single("all".into()));
    let data = scenario.generate_with_groups(cfg.n, seed, &rule)?;
    let path = run.target(&name_or(&cfg.output, "data.csv"));
    data.save(path)?;
    Ok(())
}

pub fn fit(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.fit, "fit")?.clone();
    let data = Dataset::load(run.input(&cfg.data))?;
    let features = FeatureMap::for_data(&data, cfg.group_as_feature);
    let propensity = match &cfg.propensity {
        Some(spec) => Some(fit_propensity(&data, spec, cfg.clip_floor, &features)?),
        None if cfg.adjustment != Adjustment::Direct => {
            return Err(CliError::Config(format!("`{}` adjustment needs a `propensity` spec", cfg.adjustment)))
        }
        None => None,
    };
    let models = fit_outcome_models(&data, &cfg.model, cfg.adjustment, propensity.as_ref(), &features)?;
    let bundle = ModelBundle {
        schema_version: SCHEMA_VERSION,
        models,
        propensity,
        metadata: run.metadata(Some(&data)),
    };
    let path = run.target(&name_or(&cfg.output, "models.json"));
    save_bundle(&bundle, path)?;
    Ok(())
}

pub fn solve_cmd(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.solve, "solve")?.clone();
    let data = Dataset::load(run.input(&cfg.data))?;
    let bundle = load_bundle(run.input(&cfg.models))?;
    let capacities = Capacities::new(cfg.capacities.clone())?;
    let k = bundle.models.treatment_count();
    let scores = ScoreMatrix::from_flat(bundle.models.predict_dataset(&data)?, k, data.groups())?;
    let dual = solve(&scores, &capacities, &cfg.fairness, &cfg.solver)?;
    let report = kkt_report(&scores, &capacities, &cfg.fairness, &dual)?;
    let artifact = PolicyArtifact::new(bundle.models, dual, capacities, run.metadata(Some(&data)))?;
    let path = run.target(&name_or(&cfg.output, "policy.json"));
    save_artifact(&artifact, path)?;
    run.write_json("kkt.json", &report)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(())
}

/// Rows of a covariates CSV: `id`, `x0..x{d-1}` and an optional `group`.
fn read_covariates(path: &Path) -> Result<Vec<(String, Vec<f64>, String)>> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::from)?;
    let header = reader.headers().map_err(Error::from)?.clone();
    let column = |name: &str| header.iter().position(|h| h == name);
    let id = column("id").ok_or_else(|| Error::Parse("covariates CSV needs an `id` column".into()))?;
    let group = column("group");
    let xs: Vec<usize> = (0..).map_while(|j| column(&format!("x{j}"))).collect();
    if xs.is_empty() {
        return Err(Error::Parse("covariates CSV needs columns x0, x1, ...".into()).into());
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(Error::from)?;
        let x = xs
            .iter()
            .map(|&c| {
                record[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: `{}` is not a number", line + 2, &record[c])))
            })
            .collect::<std::result::Result<Vec<f64>, Error>>()?;
        rows.push((record[id].to_string(), x, group.map_or(String::new(), |g| record[g].to_string())));
    }
    Ok(rows)
}

pub fn assign(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.assign, "assign")?.clone();
    let artifact = load_artifact(run.input(&cfg.policy))?;
    let policy = artifact.policy()?;
    let rows = read_covariates(&run.input(&cfg.data))?;
    let assigned = rows
        .iter()
        .map(|(id, x, g)| Ok(vec![id.clone(), policy.assign(x, g)?.to_string()]))
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    let bytes = csv_bytes(&["id", "assigned_treatment"], assigned)?;
    run.write(name_or(&cfg.output, "assignments.csv"), &bytes)
}

#[derive(Serialize)]
struct SimulationSummary {
    replications: usize,
    invariants_hold: bool,
    routed: Vec<Vec<usize>>,
    matches: Vec<Vec<usize>>,
    outcome_totals: Vec<Option<f64>>,
    time_averaged_queue: Vec<dualprice::simulator::Summary>,
}

pub fn simulate(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.simulate, "simulate")?.clone();
    let seed = run.seed("simulate")?;
    let artifact = load_artifact(run.input(&cfg.policy))?;
    let covariates = match &cfg.covariates {
        CovariateConfig::Resample { data } => {
            CovariateSource::Resample(Arc::new(Individual::from_dataset(&Dataset::load(run.input(data))?)))
        }
        CovariateConfig::Explicit { data } => {
            CovariateSource::Explicit(Arc::new(Individual::from_dataset(&Dataset::load(run.input(data))?)))
        }
        CovariateConfig::Synthetic { scenario, sigma, groups } => CovariateSource::Synthetic {
            scenario: Scenario::new(*scenario, *sigma)?,
            groups: groups.clone().unwrap_or(GroupRule::Single("all".into())),
        },
    };
    if cfg.replications == 0 {
        return Err(CliError::Config("simulate.replications must be positive".into()));
    }
    let mut sim = SimConfig::balanced(
        artifact.policy()?,
        artifact.capacities.as_slice(),
        cfg.arrival_rate,
        cfg.horizon,
        covariates,
        seed,
    );
    if let Some(r) = cfg.resources {
        sim.resources = r;
    }
    if let Some(i) = cfg.individuals {
        sim.individuals = i;
    }
    if let Some(step) = cfg.queue_grid_step {
        sim.queue_grid_step = step;
    }
    sim.outcome_mode = match cfg.outcomes {
        SimOutcomeConfig::None {} => OutcomeMode::None,
        SimOutcomeConfig::TrueMeans { scenario } => {
            // Conditional means do not depend on the noise level.
            OutcomeMode::TrueMeans(scenario.map(|k| Scenario::new(k, 1.0)).transpose()?)
        }
        SimOutcomeConfig::SampledPotential {} => OutcomeMode::SampledPotential,
    };

    let traces = run_replications(&sim, cfg.replications)?;
    let stats = aggregate(&traces, sim.queue_grid_step);
    let first = &traces[0];
    run.write("trace.csv", &first.records_csv()?)?;
    for t in 1..first.treatment_count() {
        run.write(format!("queue_series_{t}.csv"), &first.queue_series_csv(t)?)?;
    }
    run.write("wait.csv", &stats.wait_csv()?)?;
    run.write("adjusted_wait.csv", &stats.adjusted_wait_csv()?)?;
    run.write("queue.csv", &stats.queue_csv()?)?;
    let summary = SimulationSummary {
        replications: traces.len(),
        invariants_hold: traces.iter().all(|t| t.check_invariants().is_ok()),
        routed: traces.iter().map(|t| t.counters.routed.clone()).collect(),
        matches: traces.iter().map(|t| t.counters.matches.clone()).collect(),
        outcome_totals: traces.iter().map(|t| t.outcome_total).collect(),
        time_averaged_queue: stats.time_averaged_queue.clone(),
    };
    run.write_json("simulation.json", &summary)
}

fn comparison_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let foresight = report.perfect_foresight_outcome;
    let ratio = |v: f64| if foresight != 0.0 { (v / foresight).to_string() } else { String::new() };
    let mut rows = vec![("policy", report.policy_outcome)];
    if let Some(b) = &report.baselines {
        rows.extend([("historical", b.historical), ("random", b.random), ("no_treatment", b.no_treatment)]);
    }
    rows.push(("perfect_foresight", foresight));
    Ok(csv_bytes(
        &["policy", "outcome", "ratio"],
        rows.into_iter().map(|(name, v)| vec![name.to_string(), v.to_string(), ratio(v)]),
    )?)
}

fn evaluate_into(
    run: &mut Run,
    artifact: &PolicyArtifact,
    test: &Dataset,
    source: &OutcomeSource,
    fairness: Option<&dualprice::FairnessSpec>,
    seed: u64,
) -> Result<EvalReport> {
    let policy = artifact.policy()?;
    let report = evaluate_policy(&policy, test, source, &artifact.capacities, seed)?;
    let k = artifact.capacities.len();
    let values = outcome_matrix(source, test)?;
    let assignment = policy_assignment(&policy, test, &artifact.capacities)?;
    let realized: Vec<f64> = assignment.iter().enumerate().map(|(i, &t)| values[i * k + t]).collect();
    let spec = fairness.unwrap_or(&artifact.fairness);
    let fair = fairness_report(&assignment, &realized, &test.groups(), spec, k)?;
    run.write_json("eval.json", &report)?;
    run.write_json("fairness.json", &fair)?;
    run.write("comparison.csv", &comparison_csv(&report)?)?;
    Ok(report)
}

pub fn evaluate(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.evaluate, "evaluate")?.clone();
    let seed = run.seed("evaluate")?;
    let artifact = load_artifact(run.input(&cfg.policy))?;
    let test = Dataset::load(run.input(&cfg.data))?;
    let source = match cfg.outcomes {
        EvalOutcomeConfig::TrueMeans { scenario } => OutcomeSource::TrueMeans(Scenario::new(scenario, 1.0)?),
        EvalOutcomeConfig::PotentialOutcomes {} => OutcomeSource::PotentialOutcomes,
        EvalOutcomeConfig::Model {} => OutcomeSource::Model(&artifact.models),
    };
    evaluate_into(run, &artifact, &test, &source, cfg.fairness.as_ref(), seed)?;
    Ok(())
}

pub fn sweep(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.sweep, "sweep")?.clone();
    let config = SweepConfig {
        scenario: cfg.scenario,
        sigmas: cfg.sigmas,
        train_sizes: cfg.train_sizes,
        estimators: cfg.estimators,
        replications: cfg.replications,
        test_size: cfg.test_size,
        seed: run.seed("sweep")?,
        solve: cfg.solve,
        include_random: cfg.include_random,
    };
    let records = run_sweep(&config)?;
    run.write("sweep_records.csv", &records_csv(&records)?)?;
    run.write("ratio_curve.csv", &summary_csv(&summarize(&records))?)
}

/// Generate, fit, solve, save, reload, evaluate and simulate on one small
/// synthetic instance.
pub fn demo(run: &mut Run) -> Result<()> {
    let cfg = section(&run.loaded.config.demo, "demo")?.clone();
    let seed = run.seed("demo")?;
    let mut seeds = Stream::derive(seed, 0);
    let scenario = Scenario::new(cfg.scenario, cfg.sigma)?;
    let train = scenario.generate(cfg.n, seeds.next_u64())?;
    let test = scenario.generate(cfg.test_size, seeds.next_u64())?;
    let path = run.target(Path::new("train.csv"));
    train.save(path)?;

    let capacities = Capacities::new(scenario.capacities())?;
    let features = FeatureMap::covariates(train.feature_dim());
    let models = fit_outcome_models(&train, &ModelSpec::Ols {}, Adjustment::Direct, None, &features)?;
    let k = models.treatment_count();
    let scores = ScoreMatrix::from_flat(models.predict_dataset(&train)?, k, train.groups())?;
    let fairness = dualprice::FairnessSpec::None {};
    let dual = solve(&scores, &capacities, &fairness, &Default::default())?;
    let artifact = PolicyArtifact::new(models, dual, capacities, run.metadata(Some(&train)))?;
    let path = run.target(Path::new("policy.json"));
    save_artifact(&artifact, &path)?;
    let artifact = load_artifact(&path)?;

    evaluate_into(run, &artifact, &test, &OutcomeSource::TrueMeans(scenario), None, seeds.next_u64())?;

    let sim = SimConfig::balanced(
        artifact.policy()?,
        artifact.capacities.as_slice(),
        10.0,
        cfg.horizon,
        CovariateSource::Resample(Arc::new(Individual::from_dataset(&test))),
        seeds.next_u64(),
    );
    let trace = &run_replications(&sim, 1)?[0];
    trace
        .check_invariants()
        .map_err(|e| CliError::Core(Error::InvalidInput(format!("simulation invariant violated: {e}"))))?;
    run.write("trace.csv", &trace.records_csv()?)
}
