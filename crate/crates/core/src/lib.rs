//! Dual-price resource allocation policies learned from observational data.
//!
//! The pipeline: fit per-treatment outcome models ([`estimators`]), solve the
//! sample dual for capacity prices and optional fairness multipliers
//! ([`dual`]), compile the scoring rule into a [`policy::Policy`], then score it
//! offline ([`evaluation`]) or run it as an online FCFS queue ([`simulator`]).
//! [`synthetic`] generates the linear and quadratic benchmark scenarios and
//! [`experiment`] runs the ratio-versus-training-size sweep.

pub mod data;
pub mod dual;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod policy;
pub mod rng;
pub mod simulator;
pub mod synthetic;

pub use data::{Dataset, Row};
pub use dual::{
    dual_objective, kkt_report, oracle_solve, solve, Capacities, DualSolution, FairnessKind,
    FairnessSpec, KktReport, LambdaEntry, ScoreMatrix, SolveOptions,
};
pub use error::{Error, Result};
pub use estimators::{
    fit_outcome_models, fit_propensity, weighted_calibration, Adjustment, CalibrationCurve,
    FeatureMap, ModelSpec, OutcomeModelSet, OutcomePredictor, PropensityModel, PropensitySpec,
};
pub use evaluation::{
    baseline, evaluate_policy, fairness_report, perfect_foresight, Baseline, EvalReport,
    FairnessReport, OutcomeSource,
};
pub use policy::{load_artifact, save_artifact, Metadata, Policy, PolicyArtifact};
pub use simulator::{aggregate_replications, run_simulation, SimConfig, SimulationTrace};
pub use experiment::{run_sweep, summarize, EstimatorConfig, SweepConfig, SweepRecord, SweepSummary};
pub use synthetic::{Scenario, ScenarioKind};

/// Version string recorded in artifact metadata.
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Index of the first maximum (exact comparison, lowest index wins ties).
///
/// Every component that turns a score vector into a treatment uses this, so
/// the solver's subgradients, the KKT counts and the deployed policy agree.
#[inline]
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = values[0];
    for (t, &v) in values.iter().enumerate().skip(1) {
        if v > best_value {
            best = t;
            best_value = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::argmax_first;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_first(&[0.5, 0.6, 0.4]), 1);
        assert_eq!(argmax_first(&[0.7, 0.7, 0.2]), 0);
        assert_eq!(argmax_first(&[-1.0, 2.0, 2.0]), 1);
    }
}
