use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::estimate::{AngleEstimate, Stage};
use crate::exec::Execution;
use crate::linalg::gram_inverse;
use crate::{CMatrix, CVector, CovarianceMatrix};

/// Refuse exhaustive searches with more candidates than this.
pub const MAX_GRID_CANDIDATES: f64 = 1e8;

/// Uniform angle grid `lo, lo + step, …, hi` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub step_deg: f64,
}

impl GridSpec {
    pub fn new(lo_deg: f64, hi_deg: f64, step_deg: f64) -> Result<Self> {
        if !(lo_deg < hi_deg) || !(step_deg > 0.0) {
            return Err(DoaError::InvalidConfig(format!(
                "grid needs lo < hi and step > 0, got [{lo_deg}, {hi_deg}] step {step_deg}"
            )));
        }
        if lo_deg < -90.0 || hi_deg > 90.0 {
            return Err(DoaError::AngleDomain(if lo_deg < -90.0 { lo_deg } else { hi_deg }));
        }
        Ok(Self {
            lo_deg,
            hi_deg,
            step_deg,
        })
    }

    /// `[-90°, 90°]` at `step_deg`.
    pub fn full(step_deg: f64) -> Result<Self> {
        Self::new(-90.0, 90.0, step_deg)
    }

    /// `(hi − lo)/step + 1`, tolerant of rounding in the division.
    pub fn len(&self) -> usize {
        ((self.hi_deg - self.lo_deg) / self.step_deg + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        (self.lo_deg + i as f64 * self.step_deg).min(self.hi_deg)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, theta_deg: f64) -> bool {
        theta_deg >= self.lo_deg - 1e-9 && theta_deg <= self.hi_deg + 1e-9
    }
}

/// Exhaustive ML search over every set of `q` distinct grid angles.
///
/// Meant as an oracle for small arrays; refuses when `points^q` exceeds
/// [`MAX_GRID_CANDIDATES`]. Ill-conditioned candidates are skipped. Ties go
/// to the lexicographically smallest angle tuple.
pub fn ml_grid_search(
    r: &CovarianceMatrix,
    grid: &GridSpec,
    q: usize,
    spacing_ratio: f64,
    execution: Execution,
) -> Result<AngleEstimate> {
    let points = grid.points();
    let n = r.dim();
    if q == 0 || q >= n {
        return Err(DoaError::Shape(format!("need 1 <= q < n, got q = {q}, n = {n}")));
    }
    if points.len() < q {
        return Err(DoaError::Shape(format!(
            "grid has {} points, need at least {q}",
            points.len()
        )));
    }
    let candidates = (points.len() as f64).powi(q as i32);
    if candidates > MAX_GRID_CANDIDATES {
        return Err(DoaError::SearchTooLarge(candidates));
    }
    for &t in [points[0], points[points.len() - 1]].iter() {
        crate::array::steering_vector(t, 1, spacing_ratio, 0)?;
    }

    let steer: Vec<CVector> = points
        .iter()
        .map(|&t| crate::array::steering_unchecked(t, n, spacing_ratio, 0))
        .collect();
    let r_steer: Vec<CVector> = steer.iter().map(|a| &r.entries * a).collect();

    let eval = |idx: &[usize]| -> Option<f64> {
        let a = CMatrix::from_columns(&idx.iter().map(|&i| steer[i].clone()).collect::<Vec<_>>());
        let inv = gram_inverse(&a).ok()?;
        let arq = CMatrix::from_fn(q, q, |u, v| steer[idx[u]].dotc(&r_steer[idx[v]]));
        Some((inv * arq).trace().re)
    };

    // each first index owns one lexicographic block of combinations
    let per_first = execution.map_indexed(points.len() - q + 1, |first| {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut idx: Vec<usize> = (first..first + q).collect();
        loop {
            if let Some(v) = eval(&idx) {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, idx.clone()));
                }
            }
            if !next_combination(&mut idx[1..], points.len()) {
                break;
            }
        }
        best
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    for cand in per_first.into_iter().flatten() {
        if best.as_ref().is_none_or(|(b, _)| cand.0 > *b) {
            best = Some(cand);
        }
    }
    let (_, idx) = best.ok_or(DoaError::Conditioning {
        rcond: 0.0,
        threshold: crate::linalg::RCOND_FLOOR,
    })?;
    Ok(AngleEstimate::new(
        idx.iter().map(|&i| points[i]).collect(),
        Stage::MlGrid,
    ))
}

/// Advances a strictly increasing index tuple in lexicographic order with
/// entries below `limit`. Returns false once exhausted.
fn next_combination(idx: &mut [usize], limit: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < limit - (k - i) {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::model_covariance;

    #[test]
    fn grid_counts() {
        assert_eq!(GridSpec::full(1.0).unwrap().len(), 181);
        assert_eq!(GridSpec::full(0.1).unwrap().len(), 1801);
        assert_eq!(GridSpec::new(8.0, 12.0, 0.1).unwrap().len(), 41);
        assert!(GridSpec::new(1.0, 1.0, 0.1).is_err());
        assert!(GridSpec::new(-95.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut idx = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut idx, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
    }

    #[test]
    fn single_source_on_grid() {
        let r = model_covariance(&[23.0], &CMatrix::identity(1, 1), 0.0, 8, 0.5, 0).unwrap();
        let grid = GridSpec::full(1.0).unwrap();
        let est = ml_grid_search(&r, &grid, 1, 0.5, Execution::Sequential).unwrap();
        assert_eq!(est.angles_deg, vec![23.0]);
    }

    #[test]
    fn two_sources_on_grid() {
        let r = model_covariance(&[-20.0, 30.0], &CMatrix::identity(2, 2), 0.0, 8, 0.5, 0)
            .unwrap();
        let grid = GridSpec::full(1.0).unwrap();
        let seq = ml_grid_search(&r, &grid, 2, 0.5, Execution::Sequential).unwrap();
        assert_eq!(seq.angles_deg, vec![-20.0, 30.0]);
        let par = ml_grid_search(&r, &grid, 2, 0.5, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn candidate_guard() {
        let r = model_covariance(&[0.0], &CMatrix::identity(1, 1), 1.0, 8, 0.5, 0).unwrap();
        let grid = GridSpec::full(0.01).unwrap();
        assert!(matches!(
            ml_grid_search(&r, &grid, 3, 0.5, Execution::Sequential),
            Err(DoaError::SearchTooLarge(_))
        ));
    }
}
