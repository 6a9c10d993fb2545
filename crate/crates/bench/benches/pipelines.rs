use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmlsim_core::estimators::{forecast_ols, forecast_post_lasso, infer_naive, infer_partialling_out};
use dmlsim_core::lasso::{coordinate_descent, lambda_max, post_lasso, PenaltyPlan};
use dmlsim_core::montecarlo::run_replication;
use dmlsim_core::rng::{cholesky_factor, CovarianceSpec};
use dmlsim_core::{generate, PaperVariant, PipelineSet, ScenarioConfig};
use ndarray::{concatenate, Axis};
use std::hint::black_box;

fn solvers(c: &mut Criterion) {
    let cfg = ScenarioConfig::paper(PaperVariant::Base48);
    let ds = generate(&cfg, 0).unwrap();
    let x = concatenate![Axis(1), ds.train_d().insert_axis(Axis(1)), ds.train_x()];
    let y = ds.train_y();
    let lmax = lambda_max(x.view(), y);

    let mut group = c.benchmark_group("coordinate_descent");
    for frac in [0.5, 0.1, 0.01] {
        group.bench_with_input(BenchmarkId::from_parameter(frac), &frac, |b, &frac| {
            b.iter(|| coordinate_descent(x.view(), y, black_box(frac * lmax), 1e-7, 10_000))
        });
    }
    group.finish();

    c.bench_function("post_lasso_plugin", |b| {
        b.iter(|| post_lasso(x.view(), y, &PenaltyPlan::default(), true).unwrap())
    });
    c.bench_function("cholesky_p40", |b| {
        b.iter(|| cholesky_factor(black_box(CovarianceSpec::new(40, 0.3))).unwrap())
    });
}

fn pipelines(c: &mut Criterion) {
    let cfg = ScenarioConfig::paper(PaperVariant::Base48);
    let ds = generate(&cfg, 1).unwrap();
    let opts = &cfg.estimation;
    c.bench_function("forecast_ols", |b| b.iter(|| forecast_ols(&ds, opts).unwrap()));
    c.bench_function("forecast_post_lasso", |b| {
        b.iter(|| forecast_post_lasso(&ds, opts).unwrap())
    });
    c.bench_function("infer_naive", |b| b.iter(|| infer_naive(&ds, opts).unwrap()));
    c.bench_function("infer_partialling_out", |b| {
        b.iter(|| infer_partialling_out(&ds, opts).unwrap())
    });

    let factor = cholesky_factor(cfg.covariance()).unwrap();
    c.bench_function("replication_all_pipelines", |b| {
        b.iter(|| run_replication(&cfg, &factor, PipelineSet::all(), black_box(2)))
    });
}

criterion_group!(benches, solvers, pipelines);
criterion_main!(benches);
