use std::fs;

use doa_core::array::{plan_subarrays, sample_covariance, synthesize};
use doa_core::classical::ml_objective;
use doa_core::harness::dataset::{export_dataset, samples_file, ExportSpec};
use doa_core::harness::osap::{import_predictions, prediction_paths, write_angle_table, RefineSettings};
use doa_core::harness::sweep::{
    run_rmse_sweep, write_csv, EstimatorKind, EstimatorSettings, SweepConfig,
};
use doa_core::metrics::rmse;
use doa_core::opsc::{opsc_estimate, OpscSettings};
use doa_core::{AngleEstimate, ArrayConfig, DoaError, Execution, SourceModel, SourceScene, Stage};

fn scene(angles: &[f64], snr: f64, snaps: usize, seed: u64) -> SourceScene {
    SourceScene::new(angles.to_vec(), snr, snaps, seed, SourceModel::UncorrelatedGaussian).unwrap()
}

#[test]
fn noiseless_single_source_is_exact_at_every_stage() {
    let cfg = ArrayConfig::half_wavelength(32).unwrap();
    let plan = plan_subarrays(&cfg, 8, 4).unwrap();
    let block = synthesize(&cfg, &scene(&[15.0], f64::INFINITY, 20, 3)).unwrap();
    let out = opsc_estimate(&block, &plan, 0.5, &OpscSettings::new(1)).unwrap();
    for coarse in &out.coarse {
        assert!((coarse.as_ref().unwrap().angles_deg[0] - 15.0).abs() < 1e-6);
    }
    assert!((out.combined.angles_deg[0] - 15.0).abs() < 1e-6);
    assert!((out.estimate().angles_deg[0] - 15.0).abs() < 1e-6);
    assert_eq!(out.estimate().stage, Stage::Refined);
}

#[test]
fn n128_m32_m0_16_gives_seven_subarrays() {
    let cfg = ArrayConfig::half_wavelength(128).unwrap();
    let plan = plan_subarrays(&cfg, 32, 16).unwrap();
    let block = synthesize(&cfg, &scene(&[-10.0, 20.0], 20.0, 200, 11)).unwrap();
    let out = opsc_estimate(&block, &plan, 0.5, &OpscSettings::new(2)).unwrap();
    assert_eq!(out.coarse.len(), 7);
    for coarse in &out.coarse {
        let e = coarse.as_ref().unwrap();
        assert_eq!(e.len(), 2);
        assert!(e.angles_deg[0] < e.angles_deg[1]);
        assert!((e.angles_deg[0] + 10.0).abs() < 1.0 && (e.angles_deg[1] - 20.0).abs() < 1.0);
    }
}

#[test]
fn refinement_stays_in_box_and_improves_objective() {
    let cfg = ArrayConfig::half_wavelength(32).unwrap();
    let plan = plan_subarrays(&cfg, 8, 4).unwrap();
    let settings = OpscSettings::new(2);
    for seed in 0..20 {
        let block = synthesize(&cfg, &scene(&[-10.0, 20.0], 0.0, 100, seed)).unwrap();
        let out = opsc_estimate(&block, &plan, 0.5, &settings).unwrap();
        let box_half = settings.h as f64 * settings.sigma_deg;
        for (r, c) in out.estimate().angles_deg.iter().zip(&out.combined.angles_deg) {
            assert!((r - c).abs() <= box_half + 1e-9);
        }
        let r = sample_covariance(&block).unwrap();
        let start = ml_objective(&r, &out.combined.angles_deg, 0.5).unwrap();
        assert!(out.refined.final_objective() >= start - 1e-9 * start);
    }
}

#[test]
fn combining_beats_single_subarrays_at_desk_scale() {
    let cfg = ArrayConfig::half_wavelength(32).unwrap();
    let plan = plan_subarrays(&cfg, 8, 4).unwrap();
    let settings = OpscSettings::new(2);
    let truth = AngleEstimate::new(vec![-10.0, 20.0], Stage::Truth);
    let mut per_k: Vec<Vec<AngleEstimate>> = vec![Vec::new(); plan.k_subarrays];
    let mut combined = Vec::new();
    for seed in 0..200 {
        let block = synthesize(&cfg, &scene(&truth.angles_deg, 10.0, 200, 500 + seed)).unwrap();
        let out = opsc_estimate(&block, &plan, 0.5, &settings).unwrap();
        for (k, c) in out.coarse.into_iter().enumerate() {
            per_k[k].push(c.unwrap());
        }
        combined.push(out.combined);
    }
    let truths = vec![truth; combined.len()];
    let combined_rmse = rmse(&combined, &truths).unwrap();
    for (k, est) in per_k.iter().enumerate() {
        let single = rmse(est, &truths).unwrap();
        assert!(combined_rmse <= single + 0.002, "k = {k}: combined {combined_rmse} vs {single}");
    }
}

#[test]
fn more_overlap_means_more_subarrays() {
    let cfg = ArrayConfig::half_wavelength(64).unwrap();
    let mut last_k = 0;
    for m0 in [0, 4, 8, 12] {
        let plan = plan_subarrays(&cfg, 16, m0).unwrap();
        assert!(plan.k_subarrays > last_k);
        last_k = plan.k_subarrays;
        let block = synthesize(&cfg, &scene(&[-10.0, 20.0], 10.0, 100, m0 as u64)).unwrap();
        assert!(opsc_estimate(&block, &plan, 0.5, &OpscSettings::new(2)).is_ok());
    }
}

#[test]
fn complexity_family_runs_end_to_end() {
    for n in [32, 64, 128, 256] {
        let cfg = ArrayConfig::half_wavelength(n).unwrap();
        let plan = plan_subarrays(&cfg, n / 4, n / 8).unwrap();
        assert_eq!(plan.k_subarrays, 7);
        let block = synthesize(&cfg, &scene(&[-10.0, 20.0], 10.0, 100, n as u64)).unwrap();
        let est = opsc_estimate(&block, &plan, 0.5, &OpscSettings::new(2)).unwrap();
        assert!((est.estimate().angles_deg[0] + 10.0).abs() < 0.5);
    }
}

fn small_sweep(execution: Execution) -> SweepConfig {
    let mut settings = EstimatorSettings::new(2, 4, 2);
    settings.baseline_sigma_deg = Some(1.0);
    SweepConfig {
        array: ArrayConfig::half_wavelength(8).unwrap(),
        angles_deg: vec![-20.0, 25.0],
        source_model: SourceModel::UncorrelatedGaussian,
        n_snapshots: 50,
        snr_points_db: vec![0.0, 20.0],
        trials: 12,
        master_seed: 42,
        estimators: vec![
            EstimatorKind::MlGrid,
            EstimatorKind::MlAp,
            EstimatorKind::RootMusic,
            EstimatorKind::Opsc,
        ],
        settings,
        execution,
    }
}

#[test]
fn sweep_is_deterministic_and_strategy_independent() {
    let seq = run_rmse_sweep(&small_sweep(Execution::Sequential)).unwrap();
    let again = run_rmse_sweep(&small_sweep(Execution::Sequential)).unwrap();
    let par = run_rmse_sweep(&small_sweep(Execution::Parallel)).unwrap();
    assert_eq!(seq.len(), 8);
    for ((a, b), c) in seq.iter().zip(&again).zip(&par) {
        assert_eq!(a.rmse_deg.to_bits(), b.rmse_deg.to_bits());
        assert_eq!(a.rmse_deg.to_bits(), c.rmse_deg.to_bits());
        assert_eq!(a.failures, c.failures);
    }
    let high: Vec<_> = seq.iter().filter(|r| r.snr_db == 20.0).collect();
    for row in high {
        assert_eq!(row.failures, 0);
        assert!(row.rmse_deg < 1.0, "{:?}", row);
    }
}

#[test]
fn sweep_without_baseline_step_fails_ml_rows_only() {
    let mut config = small_sweep(Execution::Sequential);
    config.settings.baseline_sigma_deg = None;
    let rows = run_rmse_sweep(&config).unwrap();
    for row in rows {
        let expect_fail = matches!(row.estimator, EstimatorKind::MlGrid | EstimatorKind::MlAp);
        assert_eq!(row.failures == row.trials, expect_fail, "{:?}", row);
    }
}

#[test]
fn sweep_csv_has_header_and_rows() {
    let rows = run_rmse_sweep(&small_sweep(Execution::Sequential)).unwrap();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "snr_db,estimator,rmse_deg,crlb_deg,trials,failures,divergence_rate"
    );
    assert_eq!(lines.count(), rows.len());
    assert!(text.contains(",root-music,"));
}

#[test]
fn export_is_identical_under_both_strategies() {
    let array = ArrayConfig::half_wavelength(16).unwrap();
    let spec = |execution| ExportSpec {
        plan: plan_subarrays(&array, 8, 4).unwrap(),
        array,
        k: 2,
        q: 1,
        grid_deg: 0.5,
        angle_range_deg: 30.0,
        snr_db: vec![5.0],
        n_snapshots: 10,
        seed: 9,
        source_model: SourceModel::UncorrelatedGaussian,
        include_full: false,
        execution,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export_dataset(&spec(Execution::Sequential), a.path()).unwrap();
    export_dataset(&spec(Execution::Parallel), b.path()).unwrap();
    let read = |d: &std::path::Path| fs::read(d.join(samples_file(0))).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert!(!a.path().join("full_snr0.f32").exists());
}

#[test]
fn missing_prediction_file_names_the_subarray() {
    let dir = tempfile::tempdir().unwrap();
    for k in [0, 1, 3] {
        let rows = vec![(0u64, AngleEstimate::new(vec![5.0], Stage::Prediction))];
        write_angle_table(&dir.path().join(format!("pred_k{k}.csv")), &rows).unwrap();
    }
    match prediction_paths(dir.path(), 4) {
        Err(DoaError::MissingPrediction { k, .. }) => assert_eq!(k, 2),
        other => panic!("expected missing k = 2, got {other:?}"),
    }
}

#[test]
fn osap_import_refines_predictions_on_full_covariance() {
    let cfg = ArrayConfig::half_wavelength(16).unwrap();
    let covs: Vec<_> = (0..3)
        .map(|i| sample_covariance(&synthesize(&cfg, &scene(&[-12.0, 30.0], 15.0, 300, i)).unwrap()).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    for k in 0..3 {
        let rows: Vec<_> = (0..3u64)
            .map(|id| (id, AngleEstimate::new(vec![-12.6 + 0.3 * k as f64, 29.5], Stage::Prediction)))
            .collect();
        write_angle_table(&dir.path().join(format!("pred_k{k}.csv")), &rows).unwrap();
    }
    let paths = prediction_paths(dir.path(), 3).unwrap();
    let out = import_predictions(&paths, &covs, &RefineSettings::new(1.0, 2, 10)).unwrap();
    assert_eq!(out.len(), 3);
    for r in out {
        assert!((r.combined.angles_deg[0] + 12.3).abs() < 1e-12);
        assert!((r.estimate().angles_deg[0] + 12.0).abs() < 0.3);
        assert!((r.estimate().angles_deg[1] - 30.0).abs() < 0.3);
    }
}
