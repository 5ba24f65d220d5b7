//! Timings for the demeaning solver, the imputation estimator and the
//! cluster bootstrap on simulated panels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use paneldid::fe::{complete_cells, fit_fe, FeOptions, FeProblem};
use paneldid::imputation::{imputation, ImputationSpec};
use paneldid::inference::cluster_bootstrap;
use paneldid::simulate::{simulate_panel, DgpSpec};
use paneldid::{run_estimator, EstimatorConfig, Method, PanelDataset};

fn panel(n_units: usize, n_times: usize, missing_rate: f64) -> PanelDataset {
    let spec = DgpSpec { n_units, n_times, missing_rate, seed: 1, ..Default::default() };
    simulate_panel(&spec).expect("valid design").dataset
}

fn bench_fit_fe(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_fe");
    for (n, missing) in [(200, 0.0), (200, 0.1), (1000, 0.1)] {
        let ds = panel(n, 20, missing);
        let cells = complete_cells(&ds, &[], |_, _| true);
        let d = cells.iter().map(|&k| ds.treatment_grid()[k].map_or(0.0, f64::from)).collect();
        let problem = FeProblem::from_cells(&ds, &cells).with_regressor("d", d);
        let id = BenchmarkId::from_parameter(format!("{n}x20 missing {missing}"));
        group.bench_with_input(id, &problem, |b, p| b.iter(|| fit_fe(black_box(p), &FeOptions::default())));
    }
    group.finish();
}

fn bench_estimators(c: &mut Criterion) {
    let ds = panel(200, 20, 0.0);
    let cfg = EstimatorConfig::default();
    let mut group = c.benchmark_group("estimator");
    group.bench_function("imputation", |b| b.iter(|| imputation(black_box(&ds), &ImputationSpec::default())));
    for m in [Method::Twfe, Method::CsdidNotyet, Method::PanelMatch] {
        group.bench_function(m.name(), |b| b.iter(|| run_estimator(black_box(&ds), m, &cfg)));
    }
    group.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let ds = panel(100, 10, 0.0);
    let spec = ImputationSpec::default();
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("imputation B=199", |b| {
        b.iter(|| cluster_bootstrap(black_box(&ds), |r| Ok(vec![imputation(r, &spec)?.att]), 199, 7))
    });
    group.finish();
}

criterion_group!(benches, bench_fit_fe, bench_estimators, bench_bootstrap);
criterion_main!(benches);
