use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use doa_core::array::{sample_covariance, synthesize};
use doa_core::classical::{ml_grid_search, GridSpec};
use doa_core::harness::sweep::{run_rmse_sweep, EstimatorKind, EstimatorSettings, SweepConfig};
use doa_core::{ArrayConfig, Execution, SourceModel, SourceScene};

const STRATEGIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn sweep_config(execution: Execution) -> SweepConfig {
    SweepConfig {
        array: ArrayConfig::half_wavelength(32).unwrap(),
        angles_deg: vec![-10.0, 20.0],
        source_model: SourceModel::UncorrelatedGaussian,
        n_snapshots: 200,
        snr_points_db: vec![10.0],
        trials: 64,
        master_seed: 1,
        estimators: vec![EstimatorKind::Opsc],
        settings: EstimatorSettings::new(2, 8, 4),
        execution,
    }
}

fn opsc_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("opsc_rmse_sweep_64_trials");
    group.sample_size(10);
    for (name, execution) in STRATEGIES {
        let config = sweep_config(execution);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_rmse_sweep(&config).unwrap())
        });
    }
    group.finish();
}

fn exhaustive_ml(c: &mut Criterion) {
    let cfg = ArrayConfig::half_wavelength(8).unwrap();
    let scene =
        SourceScene::new(vec![-20.0, 25.0], 10.0, 100, 5, SourceModel::UncorrelatedGaussian).unwrap();
    let r = sample_covariance(&synthesize(&cfg, &scene).unwrap()).unwrap();
    let grid = GridSpec::full(0.5).unwrap();
    let mut group = c.benchmark_group("ml_grid_search_n8_q2");
    group.sample_size(10);
    for (name, execution) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ml_grid_search(&r, &grid, 2, 0.5, execution).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, opsc_trials, exhaustive_ml);
criterion_main!(benches);
