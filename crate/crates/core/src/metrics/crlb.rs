//! Deterministic (conditional-model) Cramér-Rao bound for ULA DOAs:
//!
//! `CRB(θ) = σ²/(2J) · {Re[(Dᴴ Π⊥_A D) ⊙ Pᵀ]}⁻¹`
//!
//! with `D = [∂a/∂θ_1, …]` in radians, `Π⊥_A = I − P_A` and `P` the source
//! covariance. Results are converted to degrees².

use nalgebra::DMatrix;

use crate::array::{manifold, ArrayConfig, SourceScene};
use crate::error::{DoaError, Result};
use crate::linalg::{gram_inverse, RCOND_FLOOR};
use crate::{CMatrix, Complex64};

/// `∂a/∂θ` (θ in radians) for every angle, one column each.
pub fn steering_derivative(angles_deg: &[f64], n: usize, spacing_ratio: f64) -> Result<CMatrix> {
    let a = manifold(angles_deg, n, spacing_ratio, 0)?;
    Ok(CMatrix::from_fn(n, angles_deg.len(), |i, q| {
        let k = 2.0 * std::f64::consts::PI * spacing_ratio * i as f64
            * angles_deg[q].to_radians().cos();
        Complex64::new(0.0, k) * a[(i, q)]
    }))
}

/// Per-source bound in degrees² for an explicit source covariance.
pub fn crlb_with_source_covariance(
    n: usize,
    spacing_ratio: f64,
    angles_deg: &[f64],
    noise_variance: f64,
    n_snapshots: usize,
    source_cov: &CMatrix,
) -> Result<Vec<f64>> {
    let q = angles_deg.len();
    if source_cov.nrows() != q || source_cov.ncols() != q {
        return Err(DoaError::Shape(format!(
            "source covariance is {}x{}, expected {q}x{q}",
            source_cov.nrows(),
            source_cov.ncols()
        )));
    }
    if n_snapshots == 0 {
        return Err(DoaError::Shape("zero snapshots".into()));
    }
    let a = manifold(angles_deg, n, spacing_ratio, 0)?;
    let d = steering_derivative(angles_deg, n, spacing_ratio)?;
    let proj = &a * gram_inverse(&a)? * a.adjoint();
    let perp_d = &d - proj * &d;
    let h = d.adjoint() * perp_d;
    let fim = DMatrix::<f64>::from_fn(q, q, |i, j| (h[(i, j)] * source_cov[(j, i)]).re);
    let fim = (&fim + fim.transpose()) * 0.5;

    let eig = fim.clone().symmetric_eigen();
    let (min, max) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= RCOND_FLOOR) {
        return Err(DoaError::Conditioning {
            rcond,
            threshold: RCOND_FLOOR,
        });
    }
    let inv = fim.try_inverse().ok_or(DoaError::Conditioning {
        rcond,
        threshold: RCOND_FLOOR,
    })?;
    let scale = noise_variance / (2.0 * n_snapshots as f64) * (180.0 / std::f64::consts::PI).powi(2);
    Ok((0..q).map(|i| inv[(i, i)] * scale).collect())
}

/// Bound for a scene under its nominal source covariance and noise level.
pub fn crlb(scene: &SourceScene, config: &ArrayConfig) -> Result<Vec<f64>> {
    crlb_with_source_covariance(
        config.n_elements,
        config.spacing_ratio,
        &scene.angles_deg,
        scene.noise_variance(),
        scene.n_snapshots,
        &scene.source_model.source_covariance(scene.n_sources()),
    )
}

/// `sqrt(mean_q CRB_q)` in degrees, the scale comparable with an RMSE.
pub fn crlb_rms_deg(bounds_deg2: &[f64]) -> f64 {
    (bounds_deg2.iter().sum::<f64>() / bounds_deg2.len() as f64).sqrt()
}
