//! Overlapped partitioned subarray coherent combining (OPSC).
//!
//! Pipeline: per-subarray sample covariance and Root-MUSIC, a weighted
//! (default 1/K) average of the coarse angles, then AP on the full-array
//! covariance restricted to a narrow candidate box around the average.

use serde::{Deserialize, Serialize};

use crate::array::{extract_subarray, sample_covariance, SnapshotBlock, SubarrayPlan};
use crate::classical::{ap_refine, root_music, ApInit, ApSettings, GridSpec, RefineOutcome};
use crate::error::{DoaError, Result};
use crate::estimate::{AngleEstimate, Stage};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct CombineWeights {
    weights: Vec<f64>,
}

impl CombineWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(DoaError::Weights("no weights".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(DoaError::Weights("weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DoaError::Weights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    /// `1/K` each.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(DoaError::Weights("no weights".into()));
        }
        Ok(Self {
            weights: vec![1.0 / k as f64; k],
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Per-source refinement grids centred on a combined estimate: `2hp + 1`
/// points spanning `±hσ` at step `σ/p`, minus any points beyond ±90°.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub grids: Vec<GridSpec>,
    pub centers: AngleEstimate,
    pub half_width_steps: usize,
    pub refine_factor: usize,
    pub base_step_deg: f64,
    /// True when some grid lost points to the ±90° limits.
    pub clipped: bool,
}

impl CandidateSet {
    /// Σ over sources of the per-source point count, `Q(2hp + 1)` unclipped.
    pub fn total_points(&self) -> usize {
        self.grids.iter().map(GridSpec::len).sum()
    }

    pub fn half_width_deg(&self) -> f64 {
        self.half_width_steps as f64 * self.base_step_deg
    }
}

pub fn build_candidate_set(
    center: &AngleEstimate,
    sigma_deg: f64,
    h: usize,
    p: usize,
) -> Result<CandidateSet> {
    if h == 0 || p == 0 || !(sigma_deg > 0.0) {
        return Err(DoaError::InvalidConfig(format!(
            "candidate set needs h, p >= 1 and σ > 0, got h = {h}, p = {p}, σ = {sigma_deg}"
        )));
    }
    let step = sigma_deg / p as f64;
    let half = (h * p) as i64;
    let mut clipped = false;
    let mut grids = Vec::with_capacity(center.len());
    for &c in &center.angles_deg {
        let inside = |i: i64| (-90.0..=90.0).contains(&(c + i as f64 * step));
        let lo = (-half..=half).find(|&i| inside(i));
        let hi = (-half..=half).rev().find(|&i| inside(i));
        let (lo, hi) = match (lo, hi) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(DoaError::AngleDomain(c)),
        };
        clipped |= lo != -half || hi != half;
        let lo_deg = c + lo as f64 * step;
        let hi_deg = if hi > lo { c + hi as f64 * step } else { lo_deg + step * 0.5 };
        grids.push(GridSpec::new(lo_deg, hi_deg, step)?);
    }
    Ok(CandidateSet {
        grids,
        centers: center.clone(),
        half_width_steps: h,
        refine_factor: p,
        base_step_deg: sigma_deg,
        clipped,
    })
}

/// Root-MUSIC on every subarray. A failing subarray yields its error in
/// place; callers drop it before combining.
pub fn opsc_coarse(
    block: &SnapshotBlock,
    plan: &SubarrayPlan,
    q: usize,
    spacing_ratio: f64,
    execution: Execution,
) -> Vec<Result<AngleEstimate>> {
    execution.map_indexed(plan.k_subarrays, |k| {
        let sub = extract_subarray(block, plan, k)?;
        let r = sample_covariance(&sub)?;
        root_music(&r, q, spacing_ratio)
    })
}

/// Element-wise weighted average of sorted estimates (source i of every
/// subarray is paired with source i of every other).
pub fn coherent_combine(
    estimates: &[AngleEstimate],
    weights: &CombineWeights,
) -> Result<AngleEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| DoaError::Shape("no estimates to combine".into()))?;
    if weights.as_slice().len() != estimates.len() {
        return Err(DoaError::Weights(format!(
            "{} weights for {} estimates",
            weights.as_slice().len(),
            estimates.len()
        )));
    }
    let q = first.len();
    let mut out = vec![0.0; q];
    for (est, &w) in estimates.iter().zip(weights.as_slice()) {
        if est.len() != q {
            return Err(DoaError::Shape(format!(
                "estimate with {} angles among estimates with {q}",
                est.len()
            )));
        }
        for (o, &a) in out.iter_mut().zip(&est.angles_deg) {
            *o += w * a;
        }
    }
    Ok(AngleEstimate::new(out, Stage::Combined))
}

/// Uniform combining over the subarrays that produced an estimate.
pub fn combine_valid(coarse: &[Result<AngleEstimate>]) -> Result<AngleEstimate> {
    let valid: Vec<AngleEstimate> = coarse.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    if valid.is_empty() {
        return Err(DoaError::AllSubarraysFailed);
    }
    coherent_combine(&valid, &CombineWeights::uniform(valid.len())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpscSettings {
    pub n_sources: usize,
    /// Base grid step σ in degrees.
    pub sigma_deg: f64,
    pub h: usize,
    pub p: usize,
    pub ap: ApSettings,
    pub execution: Execution,
}

impl OpscSettings {
    /// σ = 1°, h = 2, p = 10.
    pub fn new(n_sources: usize) -> Self {
        Self {
            n_sources,
            sigma_deg: 1.0,
            h: 2,
            p: 10,
            ap: ApSettings {
                max_iters: 10,
                tol_deg: 1e-6,
                init: ApInit::Given,
            },
            execution: Execution::default(),
        }
    }
}

#[derive(Debug)]
pub struct OpscOutcome {
    pub coarse: Vec<Result<AngleEstimate>>,
    pub combined: AngleEstimate,
    pub candidates: CandidateSet,
    pub refined: RefineOutcome,
}

impl OpscOutcome {
    pub fn estimate(&self) -> &AngleEstimate {
        &self.refined.estimate
    }

    pub fn valid_subarrays(&self) -> usize {
        self.coarse.iter().filter(|r| r.is_ok()).count()
    }
}

/// Refines `center` by AP on the full-array covariance over its candidate set.
pub fn refine_in_candidate_set(
    r: &crate::CovarianceMatrix,
    center: &AngleEstimate,
    sigma_deg: f64,
    h: usize,
    p: usize,
    spacing_ratio: f64,
    ap: &ApSettings,
) -> Result<(CandidateSet, RefineOutcome)> {
    let candidates = build_candidate_set(center, sigma_deg, h, p)?;
    let settings = ApSettings {
        init: ApInit::Given,
        ..*ap
    };
    let mut refined = ap_refine(r, Some(center), &candidates.grids, spacing_ratio, &settings)?;
    refined.estimate.stage = Stage::Refined;
    Ok((candidates, refined))
}

/// Full OPSC pipeline on one snapshot block.
pub fn opsc_estimate(
    block: &SnapshotBlock,
    plan: &SubarrayPlan,
    spacing_ratio: f64,
    settings: &OpscSettings,
) -> Result<OpscOutcome> {
    let coarse = opsc_coarse(block, plan, settings.n_sources, spacing_ratio, settings.execution);
    let combined = combine_valid(&coarse)?;
    let full = sample_covariance(block)?;
    let (candidates, refined) = refine_in_candidate_set(
        &full,
        &combined,
        settings.sigma_deg,
        settings.h,
        settings.p,
        spacing_ratio,
        &settings.ap,
    )?;
    Ok(OpscOutcome {
        coarse,
        combined,
        candidates,
        refined,
    })
}
