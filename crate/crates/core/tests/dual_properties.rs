use dualprice::dual::constraint_layout;
use dualprice::rng::Stream;
use dualprice::{
    dual_objective, kkt_report, oracle_solve, solve, Capacities, Error, FairnessSpec, ScoreMatrix,
    SolveOptions,
};
use proptest::prelude::*;

/// Direct transcription of the dual objective for every fairness kind.
fn reference_objective(
    rows: &[Vec<f64>],
    groups: &[&str],
    b: &[f64],
    spec: &FairnessSpec,
    mu: &[f64],
    lambda: &[f64],
    layout: &[(Option<usize>, String, String)],
) -> f64 {
    let n = rows.len() as f64;
    let k = b.len();
    let size = |g: &str| groups.iter().filter(|h| **h == g).count() as f64;
    let gamma = |t: Option<usize>, g: &str| -> f64 {
        layout
            .iter()
            .zip(lambda)
            .map(|((ct, a, c), l)| {
                if *ct != t {
                    0.0
                } else if a == g {
                    *l
                } else if c == g {
                    -*l
                } else {
                    0.0
                }
            })
            .sum()
    };
    let outcome = matches!(
        spec,
        FairnessSpec::OutcomeParity { .. } | FairnessSpec::OutcomeMinorityPriority { .. }
    );
    let mut total = 0.0;
    for (row, g) in rows.iter().zip(groups) {
        let scale = n / size(g);
        let best = (0..k)
            .map(|t| {
                if matches!(spec, FairnessSpec::None {}) {
                    row[t] - mu[t]
                } else if outcome {
                    row[t] * (1.0 - scale * gamma(None, g)) - mu[t]
                } else {
                    row[t] - mu[t] - scale * gamma(Some(t), g)
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    let delta = match spec {
        FairnessSpec::AllocParity { delta } | FairnessSpec::OutcomeParity { delta } => *delta,
        _ => 0.0,
    };
    total / n + mu.iter().zip(b).map(|(m, c)| m * c).sum::<f64>() + delta * lambda.iter().sum::<f64>()
}

fn random_instance(rng: &mut Stream, n: usize, k: usize, groups: usize) -> (Vec<Vec<f64>>, Vec<String>, Vec<f64>) {
    let rows = (0..n)
        .map(|_| (0..k).map(|_| 2.0 * rng.uniform() - 0.5).collect())
        .collect();
    let labels = (0..n).map(|i| format!("G{}", i % groups)).collect();
    let mut b = vec![1.0];
    b.extend((1..k).map(|_| 0.05 + 0.9 * rng.uniform()));
    (rows, labels, b)
}

fn specs() -> Vec<FairnessSpec> {
    vec![
        FairnessSpec::None {},
        FairnessSpec::AllocParity { delta: 0.05 },
        FairnessSpec::AllocMinorityPriority {
            minority: vec!["G1".into()],
            majority: vec!["G0".into()],
        },
        FairnessSpec::OutcomeParity { delta: 0.05 },
        FairnessSpec::OutcomeMinorityPriority {
            minority: vec!["G1".into()],
            majority: vec!["G0".into()],
        },
    ]
}

#[test]
fn library_objective_matches_reference() {
    let mut rng = Stream::new(1);
    for spec in specs() {
        for _ in 0..20 {
            let (rows, labels, b) = random_instance(&mut rng, 12, 3, 2);
            let scores = ScoreMatrix::new(rows.clone(), labels.clone()).unwrap();
            let layout = constraint_layout(&scores, &spec).unwrap();
            let mut mu = vec![0.0];
            mu.extend((1..3).map(|_| rng.uniform()));
            let lambda: Vec<f64> = layout.iter().map(|_| 0.2 * rng.uniform()).collect();
            let caps = Capacities::new(b.clone()).unwrap();
            let got = dual_objective(&scores, &caps, &spec, &mu, &lambda).unwrap();
            let groups: Vec<&str> = labels.iter().map(String::as_str).collect();
            let want = reference_objective(&rows, &groups, &b, &spec, &mu, &lambda, &layout);
            assert!((got - want).abs() < 1e-12, "{spec:?}: {got} vs {want}");
        }
    }
}

#[test]
fn convexity_probe() {
    let mut rng = Stream::new(2);
    let mut probes = 0;
    for spec in specs() {
        let (rows, labels, b) = random_instance(&mut rng, 30, 3, 2);
        let scores = ScoreMatrix::new(rows, labels).unwrap();
        let caps = Capacities::new(b).unwrap();
        let dim = constraint_layout(&scores, &spec).unwrap().len();
        let point = |rng: &mut Stream| {
            let mu: Vec<f64> = std::iter::once(0.0).chain((1..3).map(|_| 3.0 * rng.uniform())).collect();
            let lambda: Vec<f64> = (0..dim).map(|_| rng.uniform()).collect();
            (mu, lambda)
        };
        for _ in 0..200 {
            let (ma, la) = point(&mut rng);
            let (mb, lb) = point(&mut rng);
            let theta = rng.uniform();
            let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
                a.iter().zip(b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect()
            };
            let f = |m: &[f64], l: &[f64]| dual_objective(&scores, &caps, &spec, m, l).unwrap();
            let lhs = f(&mix(&ma, &mb), &mix(&la, &lb));
            let rhs = theta * f(&ma, &la) + (1.0 - theta) * f(&mb, &lb);
            assert!(lhs <= rhs + 1e-9, "{spec:?}: {lhs} > {rhs}");
            probes += 1;
        }
    }
    assert_eq!(probes, 1_000);
}

#[test]
fn solver_beats_grid_oracle_on_continuous_instances() {
    let mut rng = Stream::new(3);
    let step = 1e-2;
    for _ in 0..100 {
        let n = 1 + rng.below(50);
        let k = 2 + rng.below(2);
        let (rows, _, b) = random_instance(&mut rng, n, k, 1);
        let scores = ScoreMatrix::ungrouped(rows).unwrap();
        let caps = Capacities::new(b).unwrap();
        let spec = FairnessSpec::None {};
        let fast = solve(&scores, &caps, &spec, &SolveOptions::default()).unwrap();
        let grid = oracle_solve(&scores, &caps, &spec, step).unwrap();
        let tol = 1e-6 * (1.0 + scores.max_abs());
        // Subgradients are bounded by 1 per coordinate.
        let slack = 1e-6 + step * (k - 1) as f64;
        assert!(fast.objective <= grid.objective + tol, "{} > {}", fast.objective, grid.objective);
        assert!((fast.objective - grid.objective).abs() <= slack);
    }
}

#[test]
fn objective_bounded_below_by_no_treatment_mean() {
    let mut rng = Stream::new(4);
    for _ in 0..50 {
        let (rows, _, b) = random_instance(&mut rng, 40, 3, 1);
        let floor = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
        let scores = ScoreMatrix::ungrouped(rows).unwrap();
        let tol = 1e-6 * (1.0 + scores.max_abs());
        let sol = solve(&scores, &Capacities::new(b).unwrap(), &FairnessSpec::None {}, &SolveOptions::default())
            .unwrap();
        assert!(sol.objective >= floor - tol);
    }
}

#[test]
fn returned_objective_is_self_consistent_for_every_kind() {
    let mut rng = Stream::new(5);
    for spec in specs() {
        let (rows, labels, b) = random_instance(&mut rng, 60, 3, 2);
        let scores = ScoreMatrix::new(rows, labels).unwrap();
        let caps = Capacities::new(b).unwrap();
        let sol = match solve(&scores, &caps, &spec, &SolveOptions::default()) {
            Ok(s) => s,
            Err(Error::DualUnbounded(_)) => continue,
            Err(e) => panic!("{spec:?}: {e}"),
        };
        assert_eq!(sol.mu[0], 0.0);
        assert!(sol.mu.iter().all(|m| *m >= 0.0));
        assert!(sol.lambda.iter().all(|l| l.value >= 0.0));
        assert!(sol.gap_bound <= 1e-6 * (1.0 + scores.max_abs()));
        let lambda: Vec<f64> = sol.lambda.iter().map(|l| l.value).collect();
        let again = dual_objective(&scores, &caps, &spec, &sol.mu, &lambda).unwrap();
        assert!((again - sol.objective).abs() <= 1e-12, "{spec:?}");
    }
}

#[test]
fn kkt_residuals_at_optimum() {
    let mut rng = Stream::new(6);
    for _ in 0..30 {
        let n = 20 + rng.below(200);
        let (rows, _, b) = random_instance(&mut rng, n, 3, 1);
        let scores = ScoreMatrix::ungrouped(rows).unwrap();
        let caps = Capacities::new(b.clone()).unwrap();
        let spec = FairnessSpec::None {};
        let sol = solve(&scores, &caps, &spec, &SolveOptions::default()).unwrap();
        let report = kkt_report(&scores, &caps, &spec, &sol).unwrap();
        let max_s = scores.max_abs();
        let tol = 1e-6 * (1.0 + max_s);
        assert!(report.max_cs_residual() <= tol * (1.0 + max_s) + 2.0 * max_s / n as f64);
        for t in 1..3 {
            assert!(report.treatments[t].rate <= b[t] + 2.0 / n as f64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scale_equivariance(seed in any::<u64>(), c in 0.1f64..10.0, outcome in any::<bool>()) {
        let mut rng = Stream::new(seed);
        let (rows, labels, b) = random_instance(&mut rng, 30, 3, 2);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let caps = Capacities::new(b).unwrap();
        let base = ScoreMatrix::new(rows, labels.clone()).unwrap();
        let big = ScoreMatrix::new(scaled, labels).unwrap();
        // Allocation constraints keep δ and scale λ; outcome constraints
        // scale δ and keep λ.
        let (spec, spec_c, lambda_scale) = if outcome {
            (FairnessSpec::OutcomeParity { delta: 0.05 }, FairnessSpec::OutcomeParity { delta: 0.05 * c }, 1.0)
        } else {
            (FairnessSpec::AllocParity { delta: 0.05 }, FairnessSpec::AllocParity { delta: 0.05 }, c)
        };
        let a = match solve(&base, &caps, &spec, &SolveOptions::default()) {
            Ok(a) => a,
            Err(Error::DualUnbounded(_)) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let s = solve(&big, &caps, &spec_c, &SolveOptions::default()).unwrap();
        let tol = 1e-6 * (1.0 + base.max_abs()) * (1.0 + c);
        prop_assert!((s.objective - c * a.objective).abs() <= tol, "{} vs {}", s.objective, c * a.objective);
        // The scaled point of one solve is optimal for the other.
        let mu: Vec<f64> = a.mu.iter().map(|m| m * c).collect();
        let lambda: Vec<f64> = a.lambda.iter().map(|l| l.value * lambda_scale).collect();
        let at = dual_objective(&big, &caps, &spec_c, &mu, &lambda).unwrap();
        prop_assert!((at - s.objective).abs() <= tol);
    }

    #[test]
    fn constant_shift_moves_objective_only(seed in any::<u64>(), c in -3.0f64..3.0) {
        let mut rng = Stream::new(seed);
        let (rows, _, b) = random_instance(&mut rng, 25, 3, 1);
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
        let caps = Capacities::new(b).unwrap();
        let spec = FairnessSpec::None {};
        let base = ScoreMatrix::ungrouped(rows).unwrap();
        let moved = ScoreMatrix::ungrouped(shifted).unwrap();
        let a = solve(&base, &caps, &spec, &SolveOptions::default()).unwrap();
        let s = solve(&moved, &caps, &spec, &SolveOptions::default()).unwrap();
        let tol = 1e-6 * (1.0 + moved.max_abs()) + 1e-6 * (1.0 + base.max_abs());
        prop_assert!((s.objective - a.objective - c).abs() <= tol);
        // The unshifted optimum stays optimal after the shift.
        let at = dual_objective(&moved, &caps, &spec, &a.mu, &[]).unwrap();
        prop_assert!((at - s.objective).abs() <= tol);
    }
}
