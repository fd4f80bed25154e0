//! Alternating-projection refinement of the ML criterion.
//!
//! Each coordinate step holds every other source fixed and scans one grid
//! for the maximiser of `bᴴ R b`, where `b = Π⊥ a(θ) / ‖Π⊥ a(θ)‖` and Π⊥
//! projects onto the orthogonal complement of the fixed sources' manifold.
//! Since `P_[A, a] = P_A + b bᴴ`, every accepted step raises `tr{P_A R}`.

use serde::{Deserialize, Serialize};

use crate::array::steering_unchecked;
use crate::error::{DoaError, Result};
use crate::estimate::{AngleEstimate, Stage};
use crate::linalg::{orthonormal_basis, RCOND_FLOOR};
use crate::{CMatrix, CVector, CovarianceMatrix};

use super::grid::GridSpec;
use super::projection::ml_objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApInit {
    /// Start from the caller's estimate.
    Given,
    /// Source-by-source: source 1 alone on its grid, then source 2 given
    /// source 1, and so on.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApSettings {
    pub max_iters: usize,
    pub tol_deg: f64,
    pub init: ApInit,
}

impl Default for ApSettings {
    fn default() -> Self {
        Self {
            max_iters: 20,
            tol_deg: 1e-6,
            init: ApInit::Given,
        }
    }
}

impl ApSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol_deg > 0.0) {
            return Err(DoaError::InvalidConfig(format!(
                "AP needs max_iters >= 1 and tol > 0, got {} / {}",
                self.max_iters, self.tol_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub estimate: AngleEstimate,
    pub converged: bool,
    pub sweeps: usize,
    /// `tr{P_A R}` at the starting point, then after every sweep.
    pub objective_trace: Vec<f64>,
}

impl RefineOutcome {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

struct Scanner<'a> {
    r: &'a CovarianceMatrix,
    spacing_ratio: f64,
    n: usize,
}

impl Scanner<'_> {
    fn steer(&self, theta: f64) -> CVector {
        steering_unchecked(theta, self.n, self.spacing_ratio, 0)
    }

    fn basis(&self, others: &[f64]) -> Result<Option<CMatrix>> {
        if others.is_empty() {
            return Ok(None);
        }
        let cols: Vec<CVector> = others.iter().map(|&t| self.steer(t)).collect();
        orthonormal_basis(&CMatrix::from_columns(&cols)).map(Some)
    }

    /// `bᴴ R b` for candidate `theta`, `None` when `a(θ)` lies (numerically)
    /// in the span of the fixed sources.
    fn value(&self, basis: Option<&CMatrix>, theta: f64) -> Option<f64> {
        let mut v = self.steer(theta);
        if let Some(u) = basis {
            let coeffs = u.adjoint() * &v;
            v -= u * coeffs;
        }
        let norm_sq = v.norm_squared();
        if !(norm_sq / self.n as f64 >= RCOND_FLOOR) {
            return None;
        }
        Some(v.dotc(&(&self.r.entries * &v)).re / norm_sq)
    }

    /// Grid maximiser; lowest angle wins ties.
    fn scan(&self, basis: Option<&CMatrix>, grid: &GridSpec) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for i in 0..grid.len() {
            let theta = grid.point(i);
            if let Some(v) = self.value(basis, theta) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((theta, v));
                }
            }
        }
        best
    }
}

/// AP refinement over one grid per source.
///
/// With [`ApInit::Given`], `init` must hold one angle per grid (sorted
/// ascending and paired with the grids in order). With
/// [`ApInit::Sequential`], `init` is ignored. A coordinate only moves when
/// the scan beats its current value by more than 1e-12 relative, so an
/// exact fixed point is returned unchanged.
pub fn ap_refine(
    r: &CovarianceMatrix,
    init: Option<&AngleEstimate>,
    grids: &[GridSpec],
    spacing_ratio: f64,
    settings: &ApSettings,
) -> Result<RefineOutcome> {
    settings.validate()?;
    let q = grids.len();
    let n = r.dim();
    if q == 0 || q >= n {
        return Err(DoaError::Shape(format!("need 1 <= Q < n, got Q = {q}, n = {n}")));
    }
    let scanner = Scanner {
        r,
        spacing_ratio,
        n,
    };

    let mut theta: Vec<f64> = match settings.init {
        ApInit::Given => {
            let init = init.ok_or_else(|| {
                DoaError::InvalidConfig("AP with given init needs an initial estimate".into())
            })?;
            if init.len() != q {
                return Err(DoaError::Shape(format!(
                    "initial estimate has {} angles, {q} grids supplied",
                    init.len()
                )));
            }
            for (t, g) in init.angles_deg.iter().zip(grids) {
                if !g.contains(*t) {
                    return Err(DoaError::InvalidConfig(format!(
                        "initial angle {t}° outside its grid [{}, {}]",
                        g.lo_deg, g.hi_deg
                    )));
                }
            }
            init.angles_deg.clone()
        }
        ApInit::Sequential => {
            let mut chosen = Vec::with_capacity(q);
            for grid in grids {
                let basis = scanner.basis(&chosen)?;
                let (t, _) = scanner.scan(basis.as_ref(), grid).ok_or(DoaError::Conditioning {
                    rcond: 0.0,
                    threshold: RCOND_FLOOR,
                })?;
                chosen.push(t);
            }
            chosen
        }
    };

    let mut trace = vec![ml_objective(r, &sorted(&theta), spacing_ratio)?];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < settings.max_iters {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for src in 0..q {
            let others: Vec<f64> = theta
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != src)
                .map(|(_, &t)| t)
                .collect();
            let basis = scanner.basis(&others)?;
            let current = scanner.value(basis.as_ref(), theta[src]);
            if let Some((cand, v)) = scanner.scan(basis.as_ref(), &grids[src]) {
                let improves = match current {
                    Some(c) => v > c + 1e-12 * c.abs(),
                    None => true,
                };
                if improves {
                    max_change = max_change.max((cand - theta[src]).abs());
                    theta[src] = cand;
                }
            }
        }
        trace.push(ml_objective(r, &sorted(&theta), spacing_ratio)?);
        if max_change < settings.tol_deg {
            converged = true;
            break;
        }
    }

    Ok(RefineOutcome {
        estimate: AngleEstimate::new(theta, Stage::MlAp),
        converged,
        sweeps,
        objective_trace: trace,
    })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}
