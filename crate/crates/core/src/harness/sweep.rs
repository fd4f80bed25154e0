//! Monte Carlo RMSE-vs-SNR sweeps and closed-form complexity sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::array::{
    plan_subarrays, sample_covariance, synthesize, ArrayConfig, SnapshotBlock, SourceModel,
    SourceScene, SubarrayPlan,
};
use crate::classical::{ap_refine, ml_grid_search, root_music, ApInit, ApSettings, GridSpec};
use crate::error::{DoaError, Result};
use crate::estimate::{AngleEstimate, Stage};
use crate::exec::{derive_seed, Execution};
use crate::metrics::{crlb, crlb_rms_deg, flops_ml_ap, flops_opsc, flops_osap_cnn};
use crate::opsc::{opsc_estimate, OpscSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Exhaustive ML over the full grid (tiny arrays only).
    MlGrid,
    /// Conventional full-array AP with sequential initialisation.
    MlAp,
    /// Root-MUSIC on the full array.
    RootMusic,
    Opsc,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::MlGrid => "ml-grid",
            EstimatorKind::MlAp => "ml-ap",
            EstimatorKind::RootMusic => "root-music",
            EstimatorKind::Opsc => "opsc",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml-grid" => Ok(Self::MlGrid),
            "ml-ap" => Ok(Self::MlAp),
            "root-music" => Ok(Self::RootMusic),
            "opsc" => Ok(Self::Opsc),
            other => Err(DoaError::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Everything an estimator run needs beyond the snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub n_sources: usize,
    pub m: usize,
    pub m0: usize,
    /// Grid step of the full-range ML baselines. Required for ml-grid and
    /// ml-ap; the conventional baseline has no implied default.
    pub baseline_sigma_deg: Option<f64>,
    /// OPSC base step σ, half width h and refinement factor p.
    pub sigma_deg: f64,
    pub h: usize,
    pub p: usize,
    pub ap: ApSettings,
    pub execution: Execution,
}

impl EstimatorSettings {
    pub fn new(n_sources: usize, m: usize, m0: usize) -> Self {
        let opsc = OpscSettings::new(n_sources);
        Self {
            n_sources,
            m,
            m0,
            baseline_sigma_deg: None,
            sigma_deg: opsc.sigma_deg,
            h: opsc.h,
            p: opsc.p,
            ap: opsc.ap,
            execution: Execution::Sequential,
        }
    }

    fn opsc(&self) -> OpscSettings {
        OpscSettings {
            n_sources: self.n_sources,
            sigma_deg: self.sigma_deg,
            h: self.h,
            p: self.p,
            ap: self.ap,
            execution: self.execution,
        }
    }

    fn baseline_grid(&self, kind: EstimatorKind) -> Result<GridSpec> {
        let step = self.baseline_sigma_deg.ok_or_else(|| {
            DoaError::InvalidConfig(format!("{} needs an explicit grid step σ", kind.name()))
        })?;
        GridSpec::full(step)
    }
}

/// Runs one estimator on one snapshot block.
pub fn estimate_block(
    kind: EstimatorKind,
    block: &SnapshotBlock,
    config: &ArrayConfig,
    plan: Option<&SubarrayPlan>,
    settings: &EstimatorSettings,
) -> Result<AngleEstimate> {
    let q = settings.n_sources;
    let d = config.spacing_ratio;
    match kind {
        EstimatorKind::MlGrid => {
            let r = sample_covariance(block)?;
            let grid = settings.baseline_grid(kind)?;
            ml_grid_search(&r, &grid, q, d, settings.execution)
        }
        EstimatorKind::MlAp => {
            let r = sample_covariance(block)?;
            let grid = settings.baseline_grid(kind)?;
            let ap = ApSettings {
                init: ApInit::Sequential,
                ..settings.ap
            };
            Ok(ap_refine(&r, None, &vec![grid; q], d, &ap)?
                .estimate
                .with_stage(Stage::MlAp))
        }
        EstimatorKind::RootMusic => root_music(&sample_covariance(block)?, q, d),
        EstimatorKind::Opsc => {
            let owned;
            let plan = match plan {
                Some(p) => p,
                None => {
                    owned = plan_subarrays(config, settings.m, settings.m0)?;
                    &owned
                }
            };
            Ok(opsc_estimate(block, plan, d, &settings.opsc())?
                .estimate()
                .clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub array: ArrayConfig,
    pub angles_deg: Vec<f64>,
    pub source_model: SourceModel,
    pub n_snapshots: usize,
    pub snr_points_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub settings: EstimatorSettings,
    /// Strategy for the trial loop.
    pub execution: Execution,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(DoaError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.snr_points_db.is_empty() {
            return Err(DoaError::InvalidConfig("no SNR points".into()));
        }
        if self.estimators.is_empty() {
            return Err(DoaError::InvalidConfig("no estimators selected".into()));
        }
        if self.settings.n_sources != self.angles_deg.len() {
            return Err(DoaError::InvalidConfig(format!(
                "{} source angles but Q = {}",
                self.angles_deg.len(),
                self.settings.n_sources
            )));
        }
        Ok(())
    }

    /// Scene for trial `trial` at SNR index `snr_index`.
    pub fn scene(&self, snr_index: usize, trial: usize) -> Result<SourceScene> {
        SourceScene::new(
            self.angles_deg.clone(),
            self.snr_points_db[snr_index],
            self.n_snapshots,
            derive_seed(self.master_seed, ((snr_index as u64) << 32) | trial as u64),
            self.source_model,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub estimator: EstimatorKind,
    /// RMSE over the trials that produced an estimate; NaN if none did.
    pub rmse_deg: f64,
    /// `sqrt(mean_q CRB_q)`.
    pub crlb_deg: f64,
    pub trials: usize,
    pub failures: usize,
    pub divergence_rate: f64,
}

/// One row per (SNR, estimator), SNR-major.
pub fn run_rmse_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let plan = if config.estimators.contains(&EstimatorKind::Opsc) {
        Some(plan_subarrays(&config.array, config.settings.m, config.settings.m0)?)
    } else {
        None
    };
    let truth = AngleEstimate::new(config.angles_deg.clone(), Stage::Truth);
    let mut rows = Vec::with_capacity(config.snr_points_db.len() * config.estimators.len());

    for (si, &snr) in config.snr_points_db.iter().enumerate() {
        let crlb_deg = crlb_rms_deg(&crlb(&config.scene(si, 0)?, &config.array)?);
        // trial → per-estimator squared error sum (None on failure)
        let per_trial: Vec<Result<Vec<Option<f64>>>> =
            config.execution.map_indexed(config.trials, |t| {
                let block = synthesize(&config.array, &config.scene(si, t)?)?;
                Ok(config
                    .estimators
                    .iter()
                    .map(|&kind| {
                        estimate_block(kind, &block, &config.array, plan.as_ref(), &config.settings)
                            .ok()
                            .filter(|e| e.len() == truth.len())
                            .map(|e| {
                                e.angles_deg
                                    .iter()
                                    .zip(&truth.angles_deg)
                                    .map(|(a, b)| (a - b).powi(2))
                                    .sum::<f64>()
                            })
                    })
                    .collect())
            });
        let per_trial: Vec<Vec<Option<f64>>> = per_trial.into_iter().collect::<Result<_>>()?;

        for (ei, &kind) in config.estimators.iter().enumerate() {
            let ok: Vec<f64> = per_trial.iter().filter_map(|row| row[ei]).collect();
            let failures = config.trials - ok.len();
            let rmse_deg = if ok.is_empty() {
                f64::NAN
            } else {
                (ok.iter().sum::<f64>() / (ok.len() * truth.len()) as f64).sqrt()
            };
            rows.push(SweepRow {
                snr_db: snr,
                estimator: kind,
                rmse_deg,
                crlb_deg,
                trials: config.trials,
                failures,
                divergence_rate: failures as f64 / config.trials as f64,
            });
        }
    }
    Ok(rows)
}

/// Parameters of the complexity comparison; M = N/4 and M0 = N/8 per row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRules {
    pub snapshots: usize,
    pub sources: usize,
    pub search_dims: usize,
    pub sigma_rad: f64,
    pub h: usize,
    pub p: usize,
    /// Multiplier on the ML-AP count for the number of AP sweeps.
    pub ml_ap_iterations: usize,
}

impl Default for ComplexityRules {
    /// L = 1000, Q = q = 2, σ = 0.1°, h = 2, p = 10, one sweep.
    fn default() -> Self {
        Self {
            snapshots: 1000,
            sources: 2,
            search_dims: 2,
            sigma_rad: std::f64::consts::PI / 1800.0,
            h: 2,
            p: 10,
            ml_ap_iterations: 1,
        }
    }
}

impl ComplexityRules {
    /// ε̃ = Q(2hp + 1).
    pub fn eps_tilde(&self) -> usize {
        self.sources * (2 * self.h * self.p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub m: usize,
    pub m0: usize,
    pub k: usize,
    pub ml_ap: f64,
    pub opsc: f64,
    pub osap_cnn: f64,
    pub ratio_ml_ap_opsc: f64,
}

pub fn run_complexity_sweep(n_list: &[usize], rules: &ComplexityRules) -> Result<Vec<ComplexityRow>> {
    n_list
        .iter()
        .map(|&n| {
            if n % 8 != 0 {
                return Err(DoaError::InvalidConfig(format!(
                    "N = {n} does not give integer M = N/4 and M0 = N/8"
                )));
            }
            let (m, m0) = (n / 4, n / 8);
            let plan = plan_subarrays(&ArrayConfig::half_wavelength(n)?, m, m0)?;
            let ml_ap = rules.ml_ap_iterations as f64
                * flops_ml_ap(n, rules.sources, rules.search_dims, rules.sigma_rad);
            let opsc = flops_opsc(plan.k_subarrays, m, rules.snapshots);
            Ok(ComplexityRow {
                n,
                m,
                m0,
                k: plan.k_subarrays,
                ml_ap,
                opsc,
                osap_cnn: flops_osap_cnn(n, rules.sources, rules.eps_tilde()),
                ratio_ml_ap_opsc: ml_ap / opsc,
            })
        })
        .collect()
}

/// Writes serialisable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| DoaError::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_config(snrs: Vec<f64>) -> SweepConfig {
        let mut settings = EstimatorSettings::new(2, 8, 4);
        settings.baseline_sigma_deg = Some(0.5);
        SweepConfig {
            array: ArrayConfig::half_wavelength(16).unwrap(),
            angles_deg: vec![-10.0, 20.0],
            source_model: SourceModel::UncorrelatedGaussian,
            n_snapshots: 50,
            snr_points_db: snrs,
            trials: 6,
            master_seed: 11,
            estimators: vec![EstimatorKind::RootMusic, EstimatorKind::Opsc, EstimatorKind::MlAp],
            settings,
            execution: Execution::Parallel,
        }
    }

    #[test]
    fn row_shape_and_determinism() {
        let cfg = desk_config(vec![0.0, 10.0]);
        let rows = run_rmse_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 3);
        let again = run_rmse_sweep(&SweepConfig {
            execution: Execution::Sequential,
            ..cfg
        })
        .unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn noiseless_sweep_is_exact() {
        let mut cfg = desk_config(vec![f64::INFINITY]);
        cfg.settings.baseline_sigma_deg = Some(1.0);
        let rows = run_rmse_sweep(&cfg).unwrap();
        for row in rows {
            assert!(row.rmse_deg < 1e-6, "{row:?}");
            assert_eq!(row.crlb_deg, 0.0);
            assert_eq!(row.failures, 0);
        }
    }

    #[test]
    fn baseline_needs_sigma() {
        let mut cfg = desk_config(vec![10.0]);
        cfg.settings.baseline_sigma_deg = None;
        cfg.estimators = vec![EstimatorKind::MlAp];
        let rows = run_rmse_sweep(&cfg).unwrap();
        assert_eq!(rows[0].failures, cfg.trials);
        assert!(rows[0].rmse_deg.is_nan());
        assert_eq!(rows[0].divergence_rate, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = desk_config(vec![]);
        assert!(run_rmse_sweep(&cfg).is_err());
        cfg.snr_points_db = vec![0.0];
        cfg.trials = 0;
        assert!(run_rmse_sweep(&cfg).is_err());
    }

    #[test]
    fn complexity_rows() {
        let rows =
            run_complexity_sweep(&[32, 64, 128, 256, 512, 1024], &ComplexityRules::default()).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.k == 7));
        assert_eq!(rows[2].ml_ap, 296_920_064.0);
        assert_eq!(rows[2].osap_cnn, 6_759_424.0);
        assert_eq!(rows[2].opsc, flops_opsc(7, 32, 1000));

        let r48 = run_complexity_sweep(&[48], &ComplexityRules::default()).unwrap();
        assert_eq!((r48[0].m, r48[0].m0, r48[0].k), (12, 6, 7));
        assert!(run_complexity_sweep(&[36], &ComplexityRules::default()).is_err());
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in [
            EstimatorKind::MlGrid,
            EstimatorKind::MlAp,
            EstimatorKind::RootMusic,
            EstimatorKind::Opsc,
        ] {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("music".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn csv_output_has_header() {
        let rows = run_complexity_sweep(&[32], &ComplexityRules::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,m,m0,k,ml_ap,opsc,osap_cnn,ratio_ml_ap_opsc\n"));
    }
}
