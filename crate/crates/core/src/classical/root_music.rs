//! Root-MUSIC for a ULA (sub)array covariance.
//!
//! With `C = U_N U_Nᴴ`, the null spectrum `a(z)ᴴ C a(z)` on the unit
//! circle equals `Σ_l c_l z^l`, `c_l` being the sum of the l-th diagonal of
//! `C`. Multiplying by `z^(M−1)` gives a degree 2(M−1) polynomial whose
//! roots come in pairs `(z, 1/z*)`; source roots sit on or just inside
//! the unit circle.

use std::f64::consts::PI;

use crate::error::{DoaError, Result};
use crate::estimate::{AngleEstimate, Stage};
use crate::linalg::{hermitian_eig, poly_eval, poly_roots};
use crate::{Complex64, CovarianceMatrix};

/// Roots with modulus up to `1 + UNIT_CIRCLE_SLACK` count as inside. Exact
/// covariances put source roots on the circle as double roots, which the
/// root finder splits by ~1e-8.
pub const UNIT_CIRCLE_SLACK: f64 = 1e-6;

/// Selected roots closer than this to the unit circle are treated as
/// (split) double roots and polished as simple roots of the derivative.
pub const DOUBLE_ROOT_GAP: f64 = 1e-5;

/// Admissible roots closer than this to an already selected root are
/// treated as the other half of a split double root.
pub const ROOT_DEDUP_RADIUS: f64 = 1e-4;

/// Ascending coefficients of the Root-MUSIC polynomial for signal
/// dimension `q`.
pub fn music_polynomial(r: &CovarianceMatrix, q: usize) -> Result<Vec<Complex64>> {
    let m = r.dim();
    if q == 0 || q >= m {
        return Err(DoaError::Shape(format!("Root-MUSIC needs 1 <= q < M, got q = {q}, M = {m}")));
    }
    let eig = hermitian_eig(r, q)?;
    let un = eig.noise_subspace();
    let c = &un * un.adjoint();
    // coefficient of z^(l + M − 1) is Σ_{k − i = l} C[i, k]
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
    for i in 0..m {
        for k in 0..m {
            coeffs[k + m - 1 - i] += c[(i, k)];
        }
    }
    Ok(coeffs)
}

pub fn root_music(r: &CovarianceMatrix, q: usize, spacing_ratio: f64) -> Result<AngleEstimate> {
    let coeffs = music_polynomial(r, q)?;
    let roots = poly_roots(&coeffs)?;

    let mut admissible: Vec<Complex64> = roots
        .into_iter()
        .filter(|z| z.norm() <= 1.0 + UNIT_CIRCLE_SLACK && z.norm() > 0.0)
        .collect();
    admissible.sort_by(|a, b| {
        (1.0 - a.norm())
            .abs()
            .total_cmp(&(1.0 - b.norm()).abs())
            .then(a.arg().total_cmp(&b.arg()))
    });

    let mut selected: Vec<Complex64> = Vec::with_capacity(q);
    for z in admissible {
        if selected.len() == q {
            break;
        }
        if selected.iter().all(|s| (s - z).norm() > ROOT_DEDUP_RADIUS) {
            selected.push(z);
        }
    }
    if selected.len() < q {
        return Err(DoaError::DegenerateRoots {
            found: selected.len(),
            needed: q,
        });
    }

    let derivative: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as f64)
        .collect();
    for z in selected.iter_mut() {
        if (1.0 - z.norm()).abs() < DOUBLE_ROOT_GAP {
            *z = polish_double_root(&derivative, *z);
        }
    }

    let mut angles = Vec::with_capacity(q);
    for (index, z) in selected.iter().enumerate() {
        let s = z.arg() / (2.0 * PI * spacing_ratio);
        if s.abs() > 1.0 {
            return Err(DoaError::ArcsinDomain { index, value: s });
        }
        angles.push(s.asin().to_degrees());
    }
    Ok(AngleEstimate::new(angles, Stage::RootMusic))
}

/// Newton on p' from `z`, kept only while |p'| shrinks and the iterate
/// stays within the dedup radius.
fn polish_double_root(derivative: &[Complex64], start: Complex64) -> Complex64 {
    let mut z = start;
    let (mut dp, mut ddp) = poly_eval(derivative, z);
    for _ in 0..8 {
        if ddp.norm() == 0.0 {
            break;
        }
        let next = z - dp / ddp;
        if (next - start).norm() > ROOT_DEDUP_RADIUS {
            break;
        }
        let (ndp, nddp) = poly_eval(derivative, next);
        if ndp.norm() >= dp.norm() {
            break;
        }
        z = next;
        dp = ndp;
        ddp = nddp;
    }
    z
}
