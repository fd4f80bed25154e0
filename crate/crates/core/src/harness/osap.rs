//! Combine-and-refine stage fed by external per-subarray predictions.
//!
//! Each of the K prediction files (`pred_k{k}.csv`, header
//! `sample_id,angle_1_deg,…,angle_Q_deg`) holds one network's angle
//! estimates. Per sample the K rows are averaged with weight 1/K, and AP
//! refines the average on the full-array covariance within `±hσ`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::classical::{ApInit, ApSettings, RefineOutcome};
use crate::error::{DoaError, Result};
use crate::estimate::{AngleEstimate, Stage};
use crate::exec::Execution;
use crate::opsc::{coherent_combine, refine_in_candidate_set, CombineWeights};
use crate::CovarianceMatrix;

use super::dataset::{label_header, read_angle_table};

pub fn prediction_file(k: usize) -> String {
    format!("pred_k{k}.csv")
}

/// `dir/pred_k{k}.csv` for k in 0..K, failing on the first missing one.
pub fn prediction_paths(dir: &Path, k_subarrays: usize) -> Result<Vec<PathBuf>> {
    (0..k_subarrays)
        .map(|k| {
            let path = dir.join(prediction_file(k));
            if path.is_file() {
                Ok(path)
            } else {
                Err(DoaError::MissingPrediction { k, path })
            }
        })
        .collect()
}

/// Writes (sample_id, angles) rows in the predictions format.
pub fn write_angle_table(path: &Path, rows: &[(u64, AngleEstimate)]) -> Result<()> {
    let file = File::create(path).map_err(|e| DoaError::io(path, e))?;
    write_angle_rows(BufWriter::new(file), rows).map_err(|e| match e {
        DoaError::Io { source, .. } => DoaError::io(path, source),
        other => other,
    })
}

/// [`write_angle_table`] into any writer.
pub fn write_angle_rows<W: Write>(out: W, rows: &[(u64, AngleEstimate)]) -> Result<()> {
    let q = rows.first().map_or(1, |(_, e)| e.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(label_header(q))?;
    for (id, est) in rows {
        if est.len() != q {
            return Err(DoaError::Shape("rows with differing source counts".into()));
        }
        let mut rec = vec![id.to_string()];
        rec.extend(est.angles_deg.iter().map(|a| format!("{a}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DoaError::io("<angle table>", e))?;
    Ok(())
}

/// Reads a predictions file, sorting each row ascending.
pub fn read_predictions(path: &Path) -> Result<Vec<(u64, AngleEstimate)>> {
    Ok(read_angle_table(path)?
        .into_iter()
        .map(|(id, a)| (id, AngleEstimate::new(a, Stage::Prediction)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineSettings {
    pub sigma_deg: f64,
    pub h: usize,
    pub p: usize,
    pub spacing_ratio: f64,
    pub ap: ApSettings,
    pub execution: Execution,
}

impl RefineSettings {
    pub fn new(sigma_deg: f64, h: usize, p: usize) -> Self {
        Self {
            sigma_deg,
            h,
            p,
            spacing_ratio: 0.5,
            ap: ApSettings {
                max_iters: 10,
                tol_deg: 1e-6,
                init: ApInit::Given,
            },
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OsapResult {
    pub sample_id: u64,
    pub combined: AngleEstimate,
    pub refined: RefineOutcome,
}

impl OsapResult {
    pub fn estimate(&self) -> &AngleEstimate {
        &self.refined.estimate
    }
}

/// Combines the K prediction tables sample by sample and refines each
/// average on `covariances[sample_id]`.
///
/// All tables must list the same sample ids in the same order.
pub fn combine_and_refine(
    tables: &[Vec<(u64, AngleEstimate)>],
    covariances: &[CovarianceMatrix],
    settings: &RefineSettings,
) -> Result<Vec<OsapResult>> {
    let first = tables
        .first()
        .ok_or_else(|| DoaError::Predictions("no prediction tables".into()))?;
    for (k, table) in tables.iter().enumerate() {
        if table.len() != first.len() {
            return Err(DoaError::Predictions(format!(
                "subarray {k} has {} rows, subarray 0 has {}",
                table.len(),
                first.len()
            )));
        }
        for (row, ((a, ea), (b, _))) in table.iter().zip(first).enumerate() {
            if a != b {
                return Err(DoaError::Predictions(format!(
                    "row {}: subarray {k} has sample id {a}, subarray 0 has {b}",
                    row + 1
                )));
            }
            if ea.len() != first[0].1.len() {
                return Err(DoaError::Predictions(format!(
                    "row {}: subarray {k} has {} angles",
                    row + 1,
                    ea.len()
                )));
            }
        }
    }
    let weights = CombineWeights::uniform(tables.len())?;

    settings
        .execution
        .map_indexed(first.len(), |row| {
            let id = first[row].0;
            let r = covariances.get(id as usize).ok_or_else(|| {
                DoaError::Predictions(format!(
                    "sample id {id} has no covariance ({} available)",
                    covariances.len()
                ))
            })?;
            let per_k: Vec<AngleEstimate> = tables.iter().map(|t| t[row].1.clone()).collect();
            let combined = coherent_combine(&per_k, &weights)?;
            let (_, refined) = refine_in_candidate_set(
                r,
                &combined,
                settings.sigma_deg,
                settings.h,
                settings.p,
                settings.spacing_ratio,
                &settings.ap,
            )?;
            Ok(OsapResult {
                sample_id: id,
                combined,
                refined,
            })
        })
        .into_iter()
        .collect()
}

/// Reads K prediction files and runs [`combine_and_refine`].
pub fn import_predictions(
    paths: &[PathBuf],
    covariances: &[CovarianceMatrix],
    settings: &RefineSettings,
) -> Result<Vec<OsapResult>> {
    let tables = paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if !p.is_file() {
                return Err(DoaError::MissingPrediction { k, path: p.clone() });
            }
            read_predictions(p)
        })
        .collect::<Result<Vec<_>>>()?;
    combine_and_refine(&tables, covariances, settings)
}
