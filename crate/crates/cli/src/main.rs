use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use doa_core::array::{plan_subarrays, sample_covariance, synthesize};
use doa_core::harness::dataset::{export_dataset, read_full_covariances, read_manifest, ExportSpec};
use doa_core::harness::osap::{import_predictions, prediction_paths, write_angle_rows, RefineSettings};
use doa_core::harness::sweep::{
    estimate_block, run_complexity_sweep, run_rmse_sweep, write_csv, ComplexityRules, EstimatorKind,
    EstimatorSettings, SweepConfig,
};
use doa_core::metrics::crlb;
use doa_core::{ArrayConfig, Execution, SourceModel, SourceScene};
use serde::Serialize;

const SNR_HELP: &str = "SNR in dB, total signal power over per-antenna noise power: \
    each source has unit power and the noise variance is Q / 10^(SNR/10). `inf` disables noise";

/// Direction-of-arrival estimation for large uniform linear arrays.
#[derive(Debug, Parser)]
#[command(name = "doa", version)]
struct Cli {
    /// Emit JSON instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run trial and sample loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesise one snapshot block and print its sample covariance.
    Simulate(SimulateArgs),
    /// Run one estimator on one synthesised block.
    Estimate(EstimateArgs),
    /// Training data for the per-subarray networks.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Combine per-subarray network predictions and refine them.
    #[command(subcommand)]
    Osap(OsapCommand),
    /// Monte Carlo RMSE and FLOP-count sweeps.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Uncorrelated,
    Coherent,
}

impl From<Model> for SourceModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Uncorrelated => SourceModel::UncorrelatedGaussian,
            Model::Coherent => SourceModel::Coherent,
        }
    }
}

#[derive(Debug, Args)]
struct SceneArgs {
    /// Number of array elements N.
    #[arg(long, default_value_t = 128)]
    n: usize,
    /// Element spacing over wavelength.
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    /// Source angles in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,20")]
    angles: Vec<f64>,
    /// Snapshots J.
    #[arg(long, default_value_t = 1000)]
    snaps: usize,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true, help = SNR_HELP)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Model::Uncorrelated)]
    model: Model,
}

impl SceneArgs {
    fn build(&self) -> Result<(ArrayConfig, SourceScene)> {
        let mut angles = self.angles.clone();
        angles.sort_by(f64::total_cmp);
        Ok((
            ArrayConfig::new(self.n, self.spacing)?,
            SourceScene::new(angles, self.snr, self.snaps, self.seed, self.model.into())?,
        ))
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Print raw snapshots instead of the sample covariance.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct SearchArgs {
    /// Subarray size M.
    #[arg(long, default_value_t = 32)]
    m: usize,
    /// Subarray overlap M0.
    #[arg(long, default_value_t = 16)]
    m0: usize,
    /// Grid step σ in degrees. Required for ml-grid and ml-ap; OPSC base step, default 1.
    #[arg(long)]
    sigma: Option<f64>,
    /// Candidate half width in base steps.
    #[arg(long, default_value_t = 2)]
    h: usize,
    /// Refinement factor; candidate step is σ/p.
    #[arg(long, default_value_t = 10)]
    p: usize,
}

impl SearchArgs {
    fn settings(&self, q: usize, execution: Execution) -> EstimatorSettings {
        let mut s = EstimatorSettings::new(q, self.m, self.m0);
        s.baseline_sigma_deg = self.sigma;
        if let Some(sigma) = self.sigma {
            s.sigma_deg = sigma;
        }
        s.h = self.h;
        s.p = self.p;
        s.execution = execution;
        s
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, value_parser = parse_estimator)]
    estimator: EstimatorKind,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    search: SearchArgs,
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, String> {
    s.parse().map_err(|e: doa_core::DoaError| e.to_string())
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Write subarray covariance planes, labels and a manifest.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 16)]
    m0: usize,
    /// Subarray index, or `all` for one directory per subarray.
    #[arg(long, default_value = "all")]
    k: String,
    /// Sources per sample Q.
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Angle grid step g in degrees.
    #[arg(long, default_value_t = 1.0)]
    grid: f64,
    /// Angles span [-range, range] degrees.
    #[arg(long, default_value_t = 60.0)]
    range: f64,
    /// SNR levels in dB, comma separated (see `estimate --help` for the convention).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    snaps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Model::Uncorrelated)]
    model: Model,
    /// Also write full-array covariances, needed by `osap combine-refine`.
    #[arg(long)]
    full: bool,
    /// Output directory.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum OsapCommand {
    /// Average pred_k{k}.csv over subarrays, then refine on the full covariance.
    CombineRefine(CombineArgs),
}

#[derive(Debug, Args)]
struct CombineArgs {
    /// Dataset directory exported with --full.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    snr_index: usize,
    /// Directory holding pred_k0.csv … pred_k{K-1}.csv.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Base step σ in degrees.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    h: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// RMSE against the CRLB over an SNR sweep.
    Rmse(RmseArgs),
    /// Closed-form FLOP counts with M = N/4 and M0 = N/8.
    Flops(FlopsArgs),
}

#[derive(Debug, Args)]
struct RmseArgs {
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,20")]
    angles: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    snaps: usize,
    /// SNR points in dB, comma separated (see `estimate --help` for the convention).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,-5,0,5,10,15,20")]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Model::Uncorrelated)]
    model: Model,
    /// Estimators, comma separated: ml-grid, ml-ap, root-music, opsc.
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator, default_value = "opsc")]
    estimators: Vec<EstimatorKind>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    /// Array sizes, each a multiple of 8.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512,1024")]
    n: Vec<usize>,
    /// Snapshots L.
    #[arg(long, default_value_t = 1000)]
    snaps: usize,
    #[arg(long, default_value_t = 2)]
    sources: usize,
    /// ML search grid step in degrees; converted to radians.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    h: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// AP sweeps counted for ML-AP.
    #[arg(long, default_value_t = 1)]
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct CovarianceEntry {
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize)]
struct SnapshotEntry {
    snapshot: usize,
    element: usize,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize)]
struct EstimateRow {
    estimator: &'static str,
    source: usize,
    truth_deg: f64,
    estimate_deg: f64,
    error_deg: f64,
    crlb_deg: f64,
}

#[derive(Debug, Serialize)]
struct ExportRow {
    k: usize,
    dir: String,
    count: u64,
    grid_points: usize,
    m: usize,
    has_full: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.json, &mut sink)?,
        Command::Estimate(a) => estimate(a, execution, cli.json, &mut sink)?,
        Command::Dataset(DatasetCommand::Export(a)) => dataset_export(a, execution, cli.json, &mut sink)?,
        Command::Osap(OsapCommand::CombineRefine(a)) => combine_refine(a, execution, cli.json, &mut sink)?,
        Command::Bench(BenchCommand::Rmse(a)) => bench_rmse(a, execution, cli.json, &mut sink)?,
        Command::Bench(BenchCommand::Flops(a)) => bench_flops(a, cli.json, &mut sink)?,
    }
    sink.flush()?;
    Ok(())
}

fn emit<T: Serialize>(rows: &[T], json: bool, out: &mut dyn Write) -> Result<()> {
    if json {
        serde_json::to_writer_pretty(&mut *out, rows)?;
        writeln!(out)?;
    } else {
        write_csv(rows, out)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, json: bool, out: &mut dyn Write) -> Result<()> {
    let (config, scene) = a.scene.build()?;
    let block = synthesize(&config, &scene)?;
    if a.raw {
        let y = &block.samples;
        let rows: Vec<SnapshotEntry> = (0..y.ncols())
            .flat_map(|t| {
                (0..y.nrows()).map(move |i| SnapshotEntry {
                    snapshot: t,
                    element: i,
                    re: y[(i, t)].re,
                    im: y[(i, t)].im,
                })
            })
            .collect();
        return emit(&rows, json, out);
    }
    let r = sample_covariance(&block)?.entries;
    let rows: Vec<CovarianceEntry> = (0..r.nrows())
        .flat_map(|i| {
            let r = &r;
            (0..r.ncols()).map(move |j| CovarianceEntry {
                row: i,
                col: j,
                re: r[(i, j)].re,
                im: r[(i, j)].im,
            })
        })
        .collect();
    emit(&rows, json, out)
}

fn estimate(a: &EstimateArgs, execution: Execution, json: bool, out: &mut dyn Write) -> Result<()> {
    let (config, scene) = a.scene.build()?;
    let settings = a.search.settings(scene.n_sources(), execution);
    let block = synthesize(&config, &scene)?;
    let est = estimate_block(a.estimator, &block, &config, None, &settings)?;
    if est.len() != scene.n_sources() {
        bail!("{} returned {} angles for {} sources", a.estimator.name(), est.len(), scene.n_sources());
    }
    let bounds = crlb(&scene, &config)?;
    let rows: Vec<EstimateRow> = scene
        .angles_deg
        .iter()
        .zip(&est.angles_deg)
        .zip(&bounds)
        .enumerate()
        .map(|(i, ((t, e), b))| EstimateRow {
            estimator: a.estimator.name(),
            source: i + 1,
            truth_deg: *t,
            estimate_deg: *e,
            error_deg: e - t,
            crlb_deg: b.sqrt(),
        })
        .collect();
    emit(&rows, json, out)
}

fn dataset_export(a: &ExportArgs, execution: Execution, json: bool, out: &mut dyn Write) -> Result<()> {
    let array = ArrayConfig::new(a.n, a.spacing)?;
    let plan = plan_subarrays(&array, a.m, a.m0)?;
    let indices: Vec<usize> = if a.k == "all" {
        (0..plan.k_subarrays).collect()
    } else {
        vec![a.k.parse().with_context(|| format!("--k expects an index or `all`, got `{}`", a.k))?]
    };
    let mut rows = Vec::new();
    for &k in &indices {
        let dir = if a.k == "all" { a.dir.join(format!("k{k}")) } else { a.dir.clone() };
        let spec = ExportSpec {
            array,
            plan: plan.clone(),
            k,
            q: a.q,
            grid_deg: a.grid,
            angle_range_deg: a.range,
            snr_db: a.snr.clone(),
            n_snapshots: a.snaps,
            seed: a.seed,
            source_model: a.model.into(),
            // one copy of the full covariances is enough
            include_full: a.full && k == indices[0],
            execution,
        };
        let manifest = export_dataset(&spec, &dir)?;
        rows.push(ExportRow {
            k,
            dir: dir.display().to_string(),
            count: manifest.count,
            grid_points: manifest.grid_points,
            m: manifest.m,
            has_full: manifest.has_full,
        });
    }
    emit(&rows, json, out)
}

fn combine_refine(a: &CombineArgs, execution: Execution, json: bool, out: &mut dyn Write) -> Result<()> {
    let data = full_covariance_dir(&a.data)?;
    let manifest = read_manifest(&data)?;
    let covariances = read_full_covariances(&data, &manifest, a.snr_index)?;
    let paths = prediction_paths(&a.pred_dir, manifest.k_subarrays)?;
    let mut settings = RefineSettings::new(a.sigma, a.h, a.p);
    settings.spacing_ratio = manifest.spacing_ratio;
    settings.execution = execution;
    let results = import_predictions(&paths, &covariances, &settings)?;
    if json {
        let rows: Vec<_> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "sample_id": r.sample_id,
                    "combined_deg": r.combined.angles_deg,
                    "refined_deg": r.estimate().angles_deg,
                    "converged": r.refined.converged,
                    "sweeps": r.refined.sweeps,
                })
            })
            .collect();
        serde_json::to_writer_pretty(&mut *out, &rows)?;
        writeln!(out)?;
        return Ok(());
    }
    let rows: Vec<_> = results.iter().map(|r| (r.sample_id, r.estimate().clone())).collect();
    write_angle_rows(out, &rows)?;
    Ok(())
}

/// `dir` itself if it has full covariances, else the first `k*` child that does.
fn full_covariance_dir(dir: &Path) -> Result<PathBuf> {
    if read_manifest(dir).map(|m| m.has_full).unwrap_or(false) {
        return Ok(dir.to_path_buf());
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    children
        .into_iter()
        .find(|p| read_manifest(p).map(|m| m.has_full).unwrap_or(false))
        .with_context(|| format!("no dataset with full-array covariances under {}", dir.display()))
}

fn bench_rmse(a: &RmseArgs, execution: Execution, json: bool, out: &mut dyn Write) -> Result<()> {
    let mut angles = a.angles.clone();
    angles.sort_by(f64::total_cmp);
    let config = SweepConfig {
        array: ArrayConfig::new(a.n, a.spacing)?,
        settings: a.search.settings(angles.len(), Execution::Sequential),
        angles_deg: angles,
        source_model: a.model.into(),
        n_snapshots: a.snaps,
        snr_points_db: a.snr.clone(),
        trials: a.trials,
        master_seed: a.seed,
        estimators: a.estimators.clone(),
        execution,
    };
    emit(&run_rmse_sweep(&config)?, json, out)
}

fn bench_flops(a: &FlopsArgs, json: bool, out: &mut dyn Write) -> Result<()> {
    let rules = ComplexityRules {
        snapshots: a.snaps,
        sources: a.sources,
        search_dims: a.sources,
        sigma_rad: a.sigma.to_radians(),
        h: a.h,
        p: a.p,
        ml_ap_iterations: a.iterations,
    };
    emit(&run_complexity_sweep(&a.n, &rules)?, json, out)
}
