//! Training-set export for the per-subarray CNN regressors.
//!
//! A dataset directory holds, per SNR index `i`:
//!
//! * `samples_snr{i}.f32`: little-endian f32, sample-major; each sample is
//!   the Re plane then the Im plane of the M×M subarray covariance, each
//!   plane row-major.
//! * `labels_snr{i}.csv`: `sample_id,angle_1_deg,…,angle_Q_deg`, angles
//!   ascending.
//! * `full_snr{i}.f32` (optional): the N×N full-array covariances in the
//!   same layout, for the combine-and-refine stage.
//!
//! `manifest.txt` (`key = value` lines) is written last and marks the
//! directory complete. Sample `z` uses the z-th Q-combination (lexicographic)
//! of the grid `−θ, −θ + g, …, θ`, so every subarray index exported with the
//! same seed sees identical snapshots.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::array::{
    extract_subarray, sample_covariance, synthesize, ArrayConfig, CovarianceMatrix, SourceModel,
    SourceScene, SubarrayPlan,
};
use crate::error::{DoaError, Result};
use crate::exec::{derive_seed, Execution};
use crate::{CMatrix, Complex64};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FORMAT_VERSION: u32 = 1;
pub const CHANNELS: usize = 2;
pub const LAYOUT: &str = "sample-major, channel, row, column";
/// Refuse datasets with more combinations per SNR than this.
pub const MAX_SAMPLES_PER_SNR: u64 = 10_000_000;

const CHUNK: usize = 4096;

pub fn samples_file(snr_index: usize) -> String {
    format!("samples_snr{snr_index}.f32")
}

pub fn labels_file(snr_index: usize) -> String {
    format!("labels_snr{snr_index}.csv")
}

pub fn full_file(snr_index: usize) -> String {
    format!("full_snr{snr_index}.f32")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub subarray_index: usize,
    pub n_elements: usize,
    pub m: usize,
    pub overlap: usize,
    pub k_subarrays: usize,
    pub spacing_ratio: f64,
    pub channels: usize,
    /// Z, samples per SNR.
    pub count: u64,
    pub q: usize,
    pub snr_db: Vec<f64>,
    /// g.
    pub grid_deg: f64,
    /// θ; angles span [−θ, θ].
    pub angle_range_deg: f64,
    /// φ = 2θ/g + 1.
    pub grid_points: usize,
    pub n_snapshots: usize,
    pub seed: u64,
    pub source_model: SourceModel,
    pub has_full: bool,
    pub dtype: String,
    pub endianness: String,
    pub layout: String,
}

/// Export request for one subarray index.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportSpec {
    pub array: ArrayConfig,
    pub plan: SubarrayPlan,
    pub k: usize,
    pub q: usize,
    pub grid_deg: f64,
    pub angle_range_deg: f64,
    pub snr_db: Vec<f64>,
    pub n_snapshots: usize,
    pub seed: u64,
    pub source_model: SourceModel,
    pub include_full: bool,
    pub execution: Execution,
}

/// φ = 2θ/g + 1, requiring 2θ/g to be an integer.
pub fn grid_point_count(angle_range_deg: f64, grid_deg: f64) -> Result<usize> {
    if !(grid_deg > 0.0) || !(angle_range_deg > 0.0) || angle_range_deg >= 90.0 {
        return Err(DoaError::Dataset(format!(
            "need g > 0 and 0 < θ < 90, got g = {grid_deg}, θ = {angle_range_deg}"
        )));
    }
    let intervals = 2.0 * angle_range_deg / grid_deg;
    let rounded = intervals.round();
    if (intervals - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(DoaError::Dataset(format!(
            "2θ/g = {intervals} is not an integer"
        )));
    }
    Ok(rounded as usize + 1)
}

/// C(n, k) without overflow for the sizes of interest; saturates at u64::MAX.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// The `rank`-th k-combination of `0..n` in lexicographic order.
pub fn unrank_combination(mut rank: u64, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot - 1;
        let mut c = next;
        loop {
            let block = binomial(n - c - 1, remaining);
            if rank < block {
                break;
            }
            rank -= block;
            c += 1;
        }
        out.push(c);
        next = c + 1;
    }
    out
}

fn push_planes(out: &mut Vec<f32>, r: &CMatrix) {
    let m = r.nrows();
    for i in 0..m {
        for j in 0..m {
            out.push(r[(i, j)].re as f32);
        }
    }
    for i in 0..m {
        for j in 0..m {
            out.push(r[(i, j)].im as f32);
        }
    }
}

fn write_f32s(w: &mut impl Write, data: &[f32], path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(|e| DoaError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| DoaError::io(path, e))?))
}

/// One exported sample before serialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub angles: Vec<f64>,
    /// Re then Im plane of the subarray covariance, row-major.
    pub planes: Vec<f32>,
    /// Same for the full-array covariance, when requested.
    pub full_planes: Option<Vec<f32>>,
}

/// Scene of sample `z` at SNR index `snr_index`.
pub fn sample_scene(spec: &ExportSpec, phi: usize, snr_index: usize, z: u64) -> Result<SourceScene> {
    let angles: Vec<f64> = unrank_combination(z, phi, spec.q)
        .into_iter()
        .map(|i| -spec.angle_range_deg + i as f64 * spec.grid_deg)
        .collect();
    SourceScene::new(
        angles,
        spec.snr_db[snr_index],
        spec.n_snapshots,
        derive_seed(spec.seed, (snr_index as u64) << 40 | z),
        spec.source_model,
    )
}

/// Synthesises sample `z` exactly as [`export_dataset`] writes it.
pub fn generate_sample(
    spec: &ExportSpec,
    phi: usize,
    snr_index: usize,
    z: u64,
) -> Result<GeneratedSample> {
    let scene = sample_scene(spec, phi, snr_index, z)?;
    let block = synthesize(&spec.array, &scene)?;
    let sub = sample_covariance(&extract_subarray(&block, &spec.plan, spec.k)?)?;
    let mut planes = Vec::with_capacity(CHANNELS * spec.plan.m_elements.pow(2));
    push_planes(&mut planes, &sub.entries);
    let full_planes = if spec.include_full {
        let mut v = Vec::with_capacity(CHANNELS * spec.array.n_elements.pow(2));
        push_planes(&mut v, &sample_covariance(&block)?.entries);
        Some(v)
    } else {
        None
    };
    Ok(GeneratedSample {
        angles: scene.angles_deg,
        planes,
        full_planes,
    })
}

/// Synthesises and writes every sample for subarray `spec.k`, then the
/// manifest.
pub fn export_dataset(spec: &ExportSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.k >= spec.plan.k_subarrays {
        return Err(DoaError::SubarrayIndex {
            index: spec.k,
            count: spec.plan.k_subarrays,
        });
    }
    if spec.plan.n_elements != spec.array.n_elements {
        return Err(DoaError::Shape("plan does not match the array".into()));
    }
    if spec.snr_db.is_empty() || spec.q == 0 || spec.n_snapshots == 0 {
        return Err(DoaError::Dataset("need Q >= 1, J >= 1 and at least one SNR".into()));
    }
    let phi = grid_point_count(spec.angle_range_deg, spec.grid_deg)?;
    if phi < spec.q {
        return Err(DoaError::Dataset(format!("φ = {phi} < Q = {}", spec.q)));
    }
    let count = binomial(phi, spec.q);
    if count > MAX_SAMPLES_PER_SNR {
        return Err(DoaError::Dataset(format!(
            "C({phi}, {}) = {count} samples per SNR exceeds {MAX_SAMPLES_PER_SNR}",
            spec.q
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| DoaError::io(out_dir, e))?;
    let _ = fs::remove_file(out_dir.join(MANIFEST_FILE));

    for si in 0..spec.snr_db.len() {
        let sample_path = out_dir.join(samples_file(si));
        let full_path = out_dir.join(full_file(si));
        let label_path = out_dir.join(labels_file(si));
        let mut samples = create(&sample_path)?;
        let mut full = if spec.include_full { Some(create(&full_path)?) } else { None };
        let mut labels = csv::Writer::from_writer(create(&label_path)?);
        labels.write_record(label_header(spec.q))?;

        let mut start = 0u64;
        while start < count {
            let len = (count - start).min(CHUNK as u64) as usize;
            let chunk = spec.execution.map_indexed(len, |offset| {
                generate_sample(spec, phi, si, start + offset as u64)
            });
            for (offset, item) in chunk.into_iter().enumerate() {
                let GeneratedSample {
                    angles,
                    planes,
                    full_planes,
                } = item?;
                write_f32s(&mut samples, &planes, &sample_path)?;
                if let (Some(w), Some(p)) = (full.as_mut(), full_planes) {
                    write_f32s(w, &p, &full_path)?;
                }
                let mut record = vec![(start + offset as u64).to_string()];
                record.extend(angles.iter().map(|a| format_angle(*a)));
                labels.write_record(&record)?;
            }
            start += len as u64;
        }
        samples.flush().map_err(|e| DoaError::io(&sample_path, e))?;
        if let Some(mut w) = full {
            w.flush().map_err(|e| DoaError::io(&full_path, e))?;
        }
        labels.flush().map_err(|e| DoaError::io(&label_path, e))?;
    }

    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        subarray_index: spec.k,
        n_elements: spec.array.n_elements,
        m: spec.plan.m_elements,
        overlap: spec.plan.overlap,
        k_subarrays: spec.plan.k_subarrays,
        spacing_ratio: spec.array.spacing_ratio,
        channels: CHANNELS,
        count,
        q: spec.q,
        snr_db: spec.snr_db.clone(),
        grid_deg: spec.grid_deg,
        angle_range_deg: spec.angle_range_deg,
        grid_points: phi,
        n_snapshots: spec.n_snapshots,
        seed: spec.seed,
        source_model: spec.source_model,
        has_full: spec.include_full,
        dtype: "f32".into(),
        endianness: "little".into(),
        layout: LAYOUT.into(),
    };
    write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Shortest string that parses back to the same f64.
fn format_angle(a: f64) -> String {
    format!("{a}")
}

pub fn label_header(q: usize) -> Vec<String> {
    let mut h = vec!["sample_id".to_string()];
    h.extend((1..=q).map(|i| format!("angle_{i}_deg")));
    h
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    let model = match m.source_model {
        SourceModel::UncorrelatedGaussian => "uncorrelated-gaussian",
        SourceModel::Coherent => "coherent",
    };
    let text = format!(
        "version = {}\nsubarray_index = {}\nn_elements = {}\nm = {}\noverlap = {}\n\
         k_subarrays = {}\nspacing_ratio = {}\nchannels = {}\ncount = {}\nq = {}\n\
         snr_db = {}\ngrid_deg = {}\nangle_range_deg = {}\ngrid_points = {}\n\
         n_snapshots = {}\nseed = {}\nsource_model = {}\nhas_full = {}\ndtype = {}\n\
         endianness = {}\nlayout = {}\n",
        m.version,
        m.subarray_index,
        m.n_elements,
        m.m,
        m.overlap,
        m.k_subarrays,
        m.spacing_ratio,
        m.channels,
        m.count,
        m.q,
        join(&m.snr_db),
        m.grid_deg,
        m.angle_range_deg,
        m.grid_points,
        m.n_snapshots,
        m.seed,
        model,
        m.has_full,
        m.dtype,
        m.endianness,
        m.layout,
    );
    fs::write(path, text).map_err(|e| DoaError::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DoaError::io(&path, e))?;
    let mut kv = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            DoaError::Dataset(format!("manifest line {}: expected `key = value`", line_no + 1))
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
        kv.get(key)
            .ok_or_else(|| DoaError::Dataset(format!("manifest is missing `{key}`")))?
            .parse()
            .map_err(|_| DoaError::Dataset(format!("manifest field `{key}` is malformed")))
    }
    let snr_db = kv
        .get("snr_db")
        .ok_or_else(|| DoaError::Dataset("manifest is missing `snr_db`".into()))?
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| DoaError::Dataset(format!("bad SNR `{s}` in manifest")))
        })
        .collect::<Result<Vec<_>>>()?;
    let source_model = match kv.get("source_model").map(String::as_str) {
        Some("uncorrelated-gaussian") => SourceModel::UncorrelatedGaussian,
        Some("coherent") => SourceModel::Coherent,
        other => {
            return Err(DoaError::Dataset(format!("unknown source model {other:?}")));
        }
    };
    let manifest = DatasetManifest {
        version: get(&kv, "version")?,
        subarray_index: get(&kv, "subarray_index")?,
        n_elements: get(&kv, "n_elements")?,
        m: get(&kv, "m")?,
        overlap: get(&kv, "overlap")?,
        k_subarrays: get(&kv, "k_subarrays")?,
        spacing_ratio: get(&kv, "spacing_ratio")?,
        channels: get(&kv, "channels")?,
        count: get(&kv, "count")?,
        q: get(&kv, "q")?,
        snr_db,
        grid_deg: get(&kv, "grid_deg")?,
        angle_range_deg: get(&kv, "angle_range_deg")?,
        grid_points: get(&kv, "grid_points")?,
        n_snapshots: get(&kv, "n_snapshots")?,
        seed: get(&kv, "seed")?,
        source_model,
        has_full: get(&kv, "has_full")?,
        dtype: get(&kv, "dtype")?,
        endianness: get(&kv, "endianness")?,
        layout: get(&kv, "layout")?,
    };
    if manifest.version != FORMAT_VERSION || manifest.dtype != "f32" || manifest.endianness != "little" {
        return Err(DoaError::Dataset(format!(
            "unsupported dataset (version {}, dtype {}, {}-endian)",
            manifest.version, manifest.dtype, manifest.endianness
        )));
    }
    Ok(manifest)
}

fn read_f32_file(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| DoaError::io(path, e))?;
    if bytes.len() != expected_len * 4 {
        return Err(DoaError::Dataset(format!(
            "{} holds {} bytes, manifest implies {}",
            path.display(),
            bytes.len(),
            expected_len * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

/// Raw sample planes for one SNR index, `count · channels · M²` floats.
pub fn read_sample_planes(dir: &Path, manifest: &DatasetManifest, snr_index: usize) -> Result<Vec<f32>> {
    check_snr_index(manifest, snr_index)?;
    let len = manifest.count as usize * manifest.channels * manifest.m * manifest.m;
    read_f32_file(&dir.join(samples_file(snr_index)), len)
}

fn planes_to_covariances(data: &[f32], dim: usize) -> Result<Vec<CovarianceMatrix>> {
    data.chunks_exact(2 * dim * dim)
        .map(|s| {
            let (re, im) = s.split_at(dim * dim);
            let m = CMatrix::from_fn(dim, dim, |i, j| {
                Complex64::new(re[i * dim + j] as f64, im[i * dim + j] as f64)
            });
            CovarianceMatrix::new(m, 0)
        })
        .collect()
}

/// Subarray covariances for one SNR index, widened back to f64.
pub fn read_subarray_covariances(
    dir: &Path,
    manifest: &DatasetManifest,
    snr_index: usize,
) -> Result<Vec<CovarianceMatrix>> {
    planes_to_covariances(&read_sample_planes(dir, manifest, snr_index)?, manifest.m)
}

/// Full-array covariances for one SNR index (requires `has_full`).
pub fn read_full_covariances(
    dir: &Path,
    manifest: &DatasetManifest,
    snr_index: usize,
) -> Result<Vec<CovarianceMatrix>> {
    check_snr_index(manifest, snr_index)?;
    if !manifest.has_full {
        return Err(DoaError::Dataset(
            "dataset was exported without full-array covariances".into(),
        ));
    }
    let n = manifest.n_elements;
    let data = read_f32_file(
        &dir.join(full_file(snr_index)),
        manifest.count as usize * CHANNELS * n * n,
    )?;
    planes_to_covariances(&data, n)
}

fn check_snr_index(manifest: &DatasetManifest, snr_index: usize) -> Result<()> {
    if snr_index >= manifest.snr_db.len() {
        return Err(DoaError::Dataset(format!(
            "SNR index {snr_index} out of range ({} levels)",
            manifest.snr_db.len()
        )));
    }
    Ok(())
}

/// Labels for one SNR index as (sample_id, ascending angles).
pub fn read_labels(dir: &Path, snr_index: usize) -> Result<Vec<(u64, Vec<f64>)>> {
    read_angle_table(&dir.join(labels_file(snr_index)))
}

/// Reads a `sample_id,angle_1_deg,…` CSV.
pub fn read_angle_table(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let file = File::open(path).map_err(|e| DoaError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let q = headers.len().saturating_sub(1);
    if q == 0 || headers.iter().collect::<Vec<_>>() != label_header(q) {
        return Err(DoaError::Predictions(format!(
            "{}: header must be sample_id,angle_1_deg,…,angle_Q_deg",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let bad = || DoaError::Predictions(format!("{}: malformed row {}", path.display(), i + 1));
        if record.len() != q + 1 {
            return Err(bad());
        }
        let id: u64 = record[0].trim().parse().map_err(|_| bad())?;
        let angles = record
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?;
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(bad());
        }
        rows.push((id, angles));
    }
    Ok(rows)
}
