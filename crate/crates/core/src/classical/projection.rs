use crate::array::manifold;
use crate::error::{DoaError, Result};
use crate::linalg::gram_inverse;
use crate::{CMatrix, CovarianceMatrix};

/// `P_A = A (Aᴴ A)⁻¹ Aᴴ` for the manifold of `angles_deg` on `n` elements.
pub fn projection_matrix(
    angles_deg: &[f64],
    n: usize,
    spacing_ratio: f64,
    offset: usize,
) -> Result<CMatrix> {
    check_count(angles_deg.len(), n)?;
    let a = manifold(angles_deg, n, spacing_ratio, offset)?;
    let inv = gram_inverse(&a)?;
    let mut p = &a * inv * a.adjoint();
    crate::linalg::symmetrize(&mut p);
    Ok(p)
}

fn check_count(q: usize, n: usize) -> Result<()> {
    if q == 0 || q >= n {
        return Err(DoaError::Shape(format!(
            "need 1 <= Q < n, got Q = {q}, n = {n}"
        )));
    }
    Ok(())
}

/// ML criterion `tr{P_A R}`.
///
/// A per-column phase shift leaves span(A) unchanged, so the subarray
/// offset is irrelevant and the manifold is built from element 0.
pub fn ml_objective(r: &CovarianceMatrix, angles_deg: &[f64], spacing_ratio: f64) -> Result<f64> {
    let n = r.dim();
    check_count(angles_deg.len(), n)?;
    let a = manifold(angles_deg, n, spacing_ratio, 0)?;
    let inv = gram_inverse(&a)?;
    let arq = a.adjoint() * &r.entries * &a;
    let t = (inv * arq).trace();
    let scale = r.trace().abs().max(f64::MIN_POSITIVE);
    if t.im.abs() > 1e-9 * scale {
        return Err(DoaError::Shape(format!(
            "tr(P R) has imaginary residue {:.3e}",
            t.im
        )));
    }
    Ok(t.re)
}
