//! Event-driven simulation of the dual-price queuing policy.
//!
//! Individuals arrive, are scored by the policy and either leave untreated
//! (t = 0) or join the FCFS queue of their treatment. Resources of type t
//! arrive on their own process and serve the head of queue t, or wait idle
//! (FIFO) until someone is routed there. Individuals still queued at the
//! horizon receive t = 0. At equal timestamps resource events come first,
//! ordered by treatment, then the individual.
//!
//! Adjusted wait is `resource arrival − individual arrival`: positive when
//! the individual waited, negative when the resource sat idle; the wait is
//! its positive part.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::quantile;
use crate::io::csv_bytes;
use crate::policy::Policy;
use crate::rng::Stream;
use crate::synthetic::{GroupRule, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalProcess {
    /// Exponential inter-arrival times with mean `1/rate` days.
    Poisson { rate: f64 },
    /// Arrivals at `interval, 2·interval, …`.
    Deterministic { interval: f64 },
    /// Explicit nondecreasing arrival days.
    Trace { times: Vec<f64> },
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            ArrivalProcess::Poisson { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                Err(Error::invalid(format!("arrival rate must be positive, got {rate}")))
            }
            ArrivalProcess::Deterministic { interval } if !(*interval > 0.0 && interval.is_finite()) => {
                Err(Error::invalid(format!("arrival interval must be positive, got {interval}")))
            }
            ArrivalProcess::Trace { times } if times.windows(2).any(|w| !(w[0] <= w[1])) => {
                Err(Error::invalid("trace arrival times must be nondecreasing"))
            }
            _ => Ok(()),
        }
    }
}

/// Iterator over arrival days of one process.
struct Arrivals {
    process: ArrivalProcess,
    stream: Stream,
    last: f64,
    count: usize,
}

impl Arrivals {
    fn new(process: ArrivalProcess, stream: Stream) -> Self {
        Self {
            process,
            stream,
            last: 0.0,
            count: 0,
        }
    }

    fn next(&mut self) -> Option<f64> {
        self.count += 1;
        match &self.process {
            ArrivalProcess::Poisson { rate } => {
                self.last += self.stream.exponential(*rate);
                Some(self.last)
            }
            ArrivalProcess::Deterministic { interval } => Some(self.count as f64 * interval),
            ArrivalProcess::Trace { times } => times.get(self.count - 1).copied(),
        }
    }
}

/// One arriving individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub covariates: Vec<f64>,
    pub group: String,
    #[serde(default)]
    pub potential_outcomes: Option<Vec<f64>>,
}

impl Individual {
    pub fn from_dataset(data: &Dataset) -> Vec<Individual> {
        data.rows()
            .iter()
            .map(|r| Individual {
                covariates: r.covariates.clone(),
                group: r.group.clone(),
                potential_outcomes: r.potential_outcomes.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum CovariateSource {
    /// Uniform draws with replacement from a historical population.
    Resample(Arc<Vec<Individual>>),
    /// Fresh draws from a synthetic scenario.
    Synthetic { scenario: Scenario, groups: GroupRule },
    /// Individuals in the given order; running out before the horizon is an
    /// error.
    Explicit(Arc<Vec<Individual>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeMode {
    /// Scenario means when given, else the policy's own predictions.
    TrueMeans(Option<Scenario>),
    /// The individual's potential outcome for the received treatment.
    SampledPotential,
    None,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub horizon: f64,
    pub individuals: ArrivalProcess,
    pub covariates: CovariateSource,
    /// One process per treatment `1..=m`.
    pub resources: Vec<ArrivalProcess>,
    pub policy: Policy,
    pub outcome_mode: OutcomeMode,
    pub seed: u64,
    /// Spacing of the queue-size grid used by aggregation.
    pub queue_grid_step: f64,
}

impl SimConfig {
    /// Poisson individuals at `rate` per day and Poisson resources of type t
    /// at `bᵗ · rate`.
    pub fn balanced(
        policy: Policy,
        capacities: &[f64],
        rate: f64,
        horizon: f64,
        covariates: CovariateSource,
        seed: u64,
    ) -> Self {
        Self {
            horizon,
            individuals: ArrivalProcess::Poisson { rate },
            covariates,
            resources: capacities[1..]
                .iter()
                .map(|b| ArrivalProcess::Poisson { rate: b * rate })
                .collect(),
            policy,
            outcome_mode: OutcomeMode::TrueMeans(None),
            seed,
            queue_grid_step: horizon / 1000.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if self.resources.len() + 1 != self.policy.treatment_count() {
            return Err(Error::dims(format!(
                "{} resource processes for {} treatments",
                self.resources.len(),
                self.policy.treatment_count()
            )));
        }
        if !(self.queue_grid_step > 0.0) {
            return Err(Error::invalid("queue_grid_step must be positive"));
        }
        self.individuals.validate()?;
        self.resources.iter().try_for_each(ArrivalProcess::validate)?;
        let dim = self.policy.models().features().covariate_dim;
        let source_dim = match &self.covariates {
            CovariateSource::Resample(pool) | CovariateSource::Explicit(pool) => {
                if pool.is_empty() {
                    return Err(Error::invalid("covariate source is empty"));
                }
                pool[0].covariates.len()
            }
            CovariateSource::Synthetic { .. } => crate::synthetic::FEATURE_DIM,
        };
        if source_dim != dim {
            return Err(Error::dims(format!(
                "policy expects {dim} covariates, arrivals carry {source_dim}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitRecord {
    pub treatment: usize,
    /// Position among individuals routed to this treatment, from 0.
    pub ordinal: usize,
    pub arrival_day: f64,
    pub resource_day: f64,
    pub match_day: f64,
    pub wait: f64,
    pub adjusted_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unmatched {
    pub treatment: usize,
    pub ordinal: usize,
    pub arrival_day: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub arrivals: usize,
    /// Individuals routed to each queue (index 0: left untreated on arrival).
    pub routed: Vec<usize>,
    pub matches: Vec<usize>,
    pub resources: Vec<usize>,
    pub idle_at_horizon: Vec<usize>,
    pub waiting_at_horizon: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub horizon: f64,
    /// In match order.
    pub wait_records: Vec<WaitRecord>,
    pub unmatched: Vec<Unmatched>,
    /// Per treatment (index 0 unused): `(day, waiting individuals − idle
    /// resources)` after every change, starting at `(0, 0)`.
    pub queue_series: Vec<Vec<(f64, i64)>>,
    /// Per treatment (index 0 unused): resource arrival days.
    pub resource_arrivals: Vec<Vec<f64>>,
    pub counters: Counters,
    /// Sum of realized outcomes; absent when outcomes are not tracked.
    pub outcome_total: Option<f64>,
}

struct Waiting {
    ordinal: usize,
    arrival: f64,
    /// Outcome if matched, outcome if still waiting at the horizon.
    outcomes: (f64, f64),
}

/// Replication 0 of `config`.
pub fn run_simulation(config: &SimConfig) -> Result<SimulationTrace> {
    config.validate()?;
    run_replication(config, 0)
}

fn run_replication(config: &SimConfig, replication: u64) -> Result<SimulationTrace> {
    let k = config.policy.treatment_count();
    let rep_seed = Stream::derive(config.seed, replication).next_u64();
    let mut people = Arrivals::new(config.individuals.clone(), Stream::derive(rep_seed, 0));
    let mut draws = Stream::derive(rep_seed, 1);
    let mut sources: Vec<Arrivals> = config
        .resources
        .iter()
        .enumerate()
        .map(|(j, p)| Arrivals::new(p.clone(), Stream::derive(rep_seed, 2 + j as u64)))
        .collect();

    let mut next_person = people.next();
    let mut next_resource: Vec<Option<f64>> = sources.iter_mut().map(Arrivals::next).collect();
    let mut queues: Vec<VecDeque<Waiting>> = (0..k).map(|_| VecDeque::new()).collect();
    let mut idle: Vec<VecDeque<f64>> = (0..k).map(|_| VecDeque::new()).collect();
    let mut series: Vec<Vec<(f64, i64)>> = (0..k)
        .map(|t| if t == 0 { Vec::new() } else { vec![(0.0, 0)] })
        .collect();
    let mut resource_arrivals: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut counters = Counters {
        routed: vec![0; k],
        matches: vec![0; k],
        resources: vec![0; k],
        idle_at_horizon: vec![0; k],
        waiting_at_horizon: vec![0; k],
        ..Counters::default()
    };
    let mut records = Vec::new();
    let track = !matches!(config.outcome_mode, OutcomeMode::None);
    let mut outcome_total = 0.0;
    let mut explicit_pos = 0usize;

    let level = |q: &VecDeque<Waiting>, r: &VecDeque<f64>| q.len() as i64 - r.len() as i64;

    loop {
        // Earliest resource, lowest treatment on ties.
        let resource = next_resource
            .iter()
            .enumerate()
            .filter_map(|(j, d)| d.map(|d| (d, j + 1)))
            .filter(|&(d, _)| d <= config.horizon)
            .fold(None, |best: Option<(f64, usize)>, c| match best {
                Some(b) if b.0 <= c.0 => Some(b),
                _ => Some(c),
            });
        let person = next_person.filter(|&d| d <= config.horizon);

        match (resource, person) {
            (None, None) => break,
            (Some((day, t)), p) if p.is_none_or(|p| day <= p) => {
                counters.resources[t] += 1;
                resource_arrivals[t].push(day);
                if let Some(w) = queues[t].pop_front() {
                    counters.matches[t] += 1;
                    outcome_total += w.outcomes.0;
                    records.push(WaitRecord {
                        treatment: t,
                        ordinal: w.ordinal,
                        arrival_day: w.arrival,
                        resource_day: day,
                        match_day: day,
                        wait: day - w.arrival,
                        adjusted_wait: day - w.arrival,
                    });
                } else {
                    idle[t].push_back(day);
                }
                series[t].push((day, level(&queues[t], &idle[t])));
                next_resource[t - 1] = sources[t - 1].next();
            }
            (_, Some(day)) => {
                counters.arrivals += 1;
                let person = match &config.covariates {
                    CovariateSource::Resample(pool) => pool[draws.below(pool.len())].clone(),
                    CovariateSource::Explicit(list) => {
                        let p = list.get(explicit_pos).cloned().ok_or(Error::TraceExhausted(day))?;
                        explicit_pos += 1;
                        p
                    }
                    CovariateSource::Synthetic { scenario, groups } => {
                        let d = scenario.generate_with_groups(1, draws.next_u64(), groups)?;
                        Individual::from_dataset(&d).remove(0)
                    }
                };
                let t = config.policy.assign(&person.covariates, &person.group)?;
                let ordinal = counters.routed[t];
                counters.routed[t] += 1;
                let outcomes = if track {
                    (outcome(config, &person, t)?, outcome(config, &person, 0)?)
                } else {
                    (0.0, 0.0)
                };
                if t == 0 {
                    outcome_total += outcomes.0;
                } else {
                    if let Some(r) = idle[t].pop_front() {
                        counters.matches[t] += 1;
                        outcome_total += outcomes.0;
                        records.push(WaitRecord {
                            treatment: t,
                            ordinal,
                            arrival_day: day,
                            resource_day: r,
                            match_day: day,
                            wait: 0.0,
                            adjusted_wait: r - day,
                        });
                    } else {
                        queues[t].push_back(Waiting {
                            ordinal,
                            arrival: day,
                            outcomes,
                        });
                    }
                    series[t].push((day, level(&queues[t], &idle[t])));
                }
                next_person = people.next();
            }
            (Some(_), None) => unreachable!("covered by the resource arm"),
        }
    }

    let mut unmatched = Vec::new();
    for t in 1..k {
        counters.idle_at_horizon[t] = idle[t].len();
        counters.waiting_at_horizon[t] = queues[t].len();
        for w in &queues[t] {
            outcome_total += w.outcomes.1;
            unmatched.push(Unmatched {
                treatment: t,
                ordinal: w.ordinal,
                arrival_day: w.arrival,
            });
        }
    }
    Ok(SimulationTrace {
        horizon: config.horizon,
        wait_records: records,
        unmatched,
        queue_series: series,
        resource_arrivals,
        counters,
        outcome_total: track.then_some(outcome_total),
    })
}

fn outcome(config: &SimConfig, person: &Individual, t: usize) -> Result<f64> {
    match config.outcome_mode {
        OutcomeMode::TrueMeans(Some(scenario)) => scenario.true_means(t, &person.covariates),
        OutcomeMode::TrueMeans(None) => {
            Ok(config.policy.models().predict(&person.covariates, &person.group)?[t])
        }
        OutcomeMode::SampledPotential => person
            .potential_outcomes
            .as_ref()
            .and_then(|p| p.get(t).copied())
            .ok_or_else(|| Error::MissingOutcome("arrival has no potential outcomes".into())),
        OutcomeMode::None => Ok(0.0),
    }
}

impl SimulationTrace {
    pub fn treatment_count(&self) -> usize {
        self.queue_series.len()
    }

    /// Checks conservation, FCFS, wait decomposition and never-exceed.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let c = &self.counters;
        for t in 1..self.treatment_count() {
            if c.routed[t] != c.matches[t] + c.waiting_at_horizon[t] {
                return Err(format!("treatment {t}: routed != matched + waiting"));
            }
            if c.resources[t] != c.matches[t] + c.idle_at_horizon[t] {
                return Err(format!("treatment {t}: resources != matched + idle"));
            }
            let mut matched: Vec<&WaitRecord> =
                self.wait_records.iter().filter(|r| r.treatment == t).collect();
            if matched.len() != c.matches[t] {
                return Err(format!("treatment {t}: record count differs from counter"));
            }
            matched.sort_by(|a, b| a.ordinal.cmp(&b.ordinal));
            if matched.windows(2).any(|w| w[1].match_day < w[0].match_day) {
                return Err(format!("treatment {t}: FCFS order violated"));
            }
            let resources = &self.resource_arrivals[t];
            matched.sort_by(|a, b| a.match_day.total_cmp(&b.match_day));
            for (i, r) in matched.iter().enumerate() {
                if r.wait < 0.0 || r.wait != r.adjusted_wait.max(0.0) {
                    return Err(format!("treatment {t}: bad wait decomposition {r:?}"));
                }
                if r.match_day - r.arrival_day != r.wait {
                    return Err(format!("treatment {t}: wait != match - arrival"));
                }
                let arrived = resources.partition_point(|&d| d <= r.match_day);
                if i + 1 > arrived {
                    return Err(format!("treatment {t}: matches exceed resources at day {}", r.match_day));
                }
            }
        }
        Ok(())
    }

    /// Queue level of treatment `t` at `day` (right-continuous step function).
    pub fn queue_at(&self, t: usize, day: f64) -> i64 {
        let s = &self.queue_series[t];
        let i = s.partition_point(|&(d, _)| d <= day);
        if i == 0 {
            0
        } else {
            s[i - 1].1
        }
    }

    /// Time-averaged queue level of treatment `t` over `[0, horizon]`.
    pub fn time_averaged_queue(&self, t: usize) -> f64 {
        let s = &self.queue_series[t];
        let mut area = 0.0;
        for (i, &(day, level)) in s.iter().enumerate() {
            let end = s.get(i + 1).map_or(self.horizon, |p| p.0);
            area += level as f64 * (end - day);
        }
        area / self.horizon
    }

    /// Mean adjusted wait of the matched individuals among the last `window`
    /// routed to treatment `t`; `None` if none of them was matched.
    pub fn final_window_adjusted_wait(&self, t: usize, window: usize) -> Option<f64> {
        let start = self.counters.routed[t].saturating_sub(window);
        let waits: Vec<f64> = self
            .wait_records
            .iter()
            .filter(|r| r.treatment == t && r.ordinal >= start)
            .map(|r| r.adjusted_wait)
            .collect();
        (!waits.is_empty()).then(|| waits.iter().sum::<f64>() / waits.len() as f64)
    }

    pub fn records_csv(&self) -> Result<Vec<u8>> {
        let mut rows: Vec<&WaitRecord> = self.wait_records.iter().collect();
        rows.sort_by(|a, b| (a.treatment, a.ordinal).cmp(&(b.treatment, b.ordinal)));
        csv_bytes(
            &["treatment", "arrival_day", "match_day", "wait", "adjusted_wait"],
            rows.iter().map(|r| {
                vec![
                    r.treatment.to_string(),
                    r.arrival_day.to_string(),
                    r.match_day.to_string(),
                    r.wait.to_string(),
                    r.adjusted_wait.to_string(),
                ]
            }),
        )
    }

    pub fn queue_series_csv(&self, t: usize) -> Result<Vec<u8>> {
        csv_bytes(
            &["day", "queue_size"],
            self.queue_series[t]
                .iter()
                .map(|(d, q)| vec![d.to_string(), q.to_string()]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub p10: f64,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p10: quantile(&sorted, 0.10),
            p25: quantile(&sorted, 0.25),
            p75: quantile(&sorted, 0.75),
            p90: quantile(&sorted, 0.90),
        }
    }

    fn fields(&self) -> [String; 5] {
        [self.mean, self.p10, self.p25, self.p75, self.p90].map(|v| v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalStats {
    pub treatment: usize,
    pub ordinal: usize,
    /// Replications in which this ordinal was matched.
    pub count: usize,
    pub wait: Summary,
    pub adjusted_wait: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub treatment: usize,
    pub day: f64,
    pub level: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub replications: usize,
    pub ordinals: Vec<OrdinalStats>,
    /// Queue level across replications on a regular day grid.
    pub queue: Vec<QueueStats>,
    /// Per treatment `1..=m`: time-averaged queue level across replications.
    pub time_averaged_queue: Vec<Summary>,
}

impl AggregateStats {
    fn ordinal_csv(&self, pick: impl Fn(&OrdinalStats) -> &Summary) -> Result<Vec<u8>> {
        csv_bytes(
            &["treatment", "ordinal", "mean", "p10", "p25", "p75", "p90"],
            self.ordinals.iter().map(|o| {
                let mut row = vec![o.treatment.to_string(), o.ordinal.to_string()];
                row.extend(pick(o).fields());
                row
            }),
        )
    }

    pub fn wait_csv(&self) -> Result<Vec<u8>> {
        self.ordinal_csv(|o| &o.wait)
    }

    pub fn adjusted_wait_csv(&self) -> Result<Vec<u8>> {
        self.ordinal_csv(|o| &o.adjusted_wait)
    }

    pub fn queue_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["treatment", "day", "mean", "p10", "p25", "p75", "p90"],
            self.queue.iter().map(|q| {
                let mut row = vec![q.treatment.to_string(), q.day.to_string()];
                row.extend(q.level.fields());
                row
            }),
        )
    }
}

/// Independent replications `0..count`, in order.
pub fn run_replications(config: &SimConfig, count: usize) -> Result<Vec<SimulationTrace>> {
    config.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect()
}

pub fn aggregate_replications(config: &SimConfig, replication_count: usize) -> Result<AggregateStats> {
    if replication_count == 0 {
        return Err(Error::invalid("replication_count must be positive"));
    }
    let traces = run_replications(config, replication_count)?;
    Ok(aggregate(&traces, config.queue_grid_step))
}

/// Per-ordinal and queue statistics over replicated traces.
pub fn aggregate(traces: &[SimulationTrace], grid_step: f64) -> AggregateStats {
    let k = traces[0].treatment_count();
    let horizon = traces[0].horizon;
    let mut ordinals = Vec::new();
    let mut time_averaged_queue = Vec::new();
    let mut queue = Vec::new();
    for t in 1..k {
        let longest = traces.iter().map(|tr| tr.counters.routed[t]).max().unwrap_or(0);
        let mut waits: Vec<Vec<f64>> = vec![Vec::new(); longest];
        let mut adjusted: Vec<Vec<f64>> = vec![Vec::new(); longest];
        for tr in traces {
            for r in tr.wait_records.iter().filter(|r| r.treatment == t) {
                waits[r.ordinal].push(r.wait);
                adjusted[r.ordinal].push(r.adjusted_wait);
            }
        }
        for (i, (w, a)) in waits.iter().zip(&adjusted).enumerate() {
            if !w.is_empty() {
                ordinals.push(OrdinalStats {
                    treatment: t,
                    ordinal: i,
                    count: w.len(),
                    wait: Summary::of(w),
                    adjusted_wait: Summary::of(a),
                });
            }
        }
        let averages: Vec<f64> = traces.iter().map(|tr| tr.time_averaged_queue(t)).collect();
        time_averaged_queue.push(Summary::of(&averages));
        let steps = (horizon / grid_step).floor() as usize;
        for s in 0..=steps {
            let day = s as f64 * grid_step;
            let levels: Vec<f64> = traces.iter().map(|tr| tr.queue_at(t, day) as f64).collect();
            queue.push(QueueStats {
                treatment: t,
                day,
                level: Summary::of(&levels),
            });
        }
    }
    AggregateStats {
        replications: traces.len(),
        ordinals,
        queue,
        time_averaged_queue,
    }
}
