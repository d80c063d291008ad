use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dualprice::estimators::KnnModel;
use dualprice::{perfect_foresight, solve, FairnessSpec, SolveOptions};
use dualprice_bench::{capacities, dataset, scores};

fn dual_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("dual_solve");
    group.sample_size(10);
    let b = capacities();
    let specs = [
        ("none", FairnessSpec::None {}),
        ("alloc_parity", FairnessSpec::AllocParity { delta: 0.02 }),
        (
            "outcome_minority_priority",
            FairnessSpec::OutcomeMinorityPriority {
                minority: vec!["B".into()],
                majority: vec!["A".into()],
            },
        ),
    ];
    for n in [2_000, 20_000] {
        let s = scores(&dataset(n, 7));
        for (name, spec) in &specs {
            group.bench_with_input(BenchmarkId::new(*name, n), &s, |bench, s| {
                bench.iter(|| solve(s, &b, spec, &SolveOptions::default()).expect("solve"))
            });
        }
    }
    group.finish();
}

fn foresight(c: &mut Criterion) {
    let mut group = c.benchmark_group("perfect_foresight");
    group.sample_size(10);
    let b = capacities();
    for n in [2_000, 20_000] {
        let data = dataset(n, 8);
        let values: Vec<f64> = data
            .rows()
            .iter()
            .flat_map(|r| r.potential_outcomes.clone().expect("potential outcomes"))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &values, |bench, v| {
            bench.iter(|| perfect_foresight(v, &b).expect("foresight"))
        });
    }
    group.finish();
}

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    let data = dataset(10_000, 9);
    let dim = data.feature_dim();
    let x: Vec<f64> = data.rows().iter().flat_map(|r| r.covariates.clone()).collect();
    let y: Vec<f64> = data.rows().iter().map(|r| r.outcome).collect();
    group.bench_function("fit_10000", |bench| bench.iter(|| KnnModel::fit(&x, dim, &y, None, 25)));
    let model = KnnModel::fit(&x, dim, &y, None, 25);
    let queries = &x[..1_000 * dim];
    group.bench_function("predict_1000", |bench| {
        bench.iter(|| queries.chunks(dim).map(|q| model.predict(q)).sum::<f64>())
    });
    group.finish();
}

criterion_group!(benches, dual_solve, foresight, knn);
criterion_main!(benches);
