//! Dense complex kernels: Hermitian eigendecomposition, polynomial roots,
//! Gram-matrix conditioning. Backed by nalgebra.

use nalgebra::linalg::Schur;

use crate::error::{DoaError, Result};
use crate::{CMatrix, Complex64, CovarianceMatrix};

/// Reciprocal-condition floor below which a manifold Gram matrix is rejected.
pub const RCOND_FLOOR: f64 = 1e-12;

/// `‖R − Rᴴ‖_F / ‖R‖_F`, zero for the zero matrix.
pub fn hermitian_residual(r: &CMatrix) -> f64 {
    let norm = r.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (r - r.adjoint()).norm() / norm
}

/// Overwrites the strict lower triangle with the conjugate of the upper one
/// and zeroes the imaginary part of the diagonal.
pub fn symmetrize(r: &mut CMatrix) {
    let n = r.nrows();
    for i in 0..n {
        r[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column i pairs with `eigenvalues[i]`.
    pub eigenvectors: CMatrix,
    pub signal_dim: usize,
}

impl EigenDecomposition {
    /// U_S: eigenvectors of the `signal_dim` largest eigenvalues.
    pub fn signal_subspace(&self) -> CMatrix {
        self.eigenvectors.columns(0, self.signal_dim).into_owned()
    }

    /// U_N: the remaining eigenvectors.
    pub fn noise_subspace(&self) -> CMatrix {
        let n = self.eigenvectors.ncols();
        self.eigenvectors
            .columns(self.signal_dim, n - self.signal_dim)
            .into_owned()
    }

    /// `U Λ Uᴴ`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * self.eigenvectors.adjoint()
    }
}

pub fn hermitian_eig(r: &CovarianceMatrix, signal_dim: usize) -> Result<EigenDecomposition> {
    hermitian_eig_matrix(&r.entries, signal_dim)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eig_matrix(r: &CMatrix, signal_dim: usize) -> Result<EigenDecomposition> {
    if !r.is_square() {
        return Err(DoaError::Shape("eigendecomposition needs a square matrix".into()));
    }
    let asym = hermitian_residual(r);
    if asym > 1e-10 {
        return Err(DoaError::NotHermitian(asym));
    }
    let n = r.nrows();
    if signal_dim > n {
        return Err(DoaError::Shape(format!(
            "signal dimension {signal_dim} exceeds matrix size {n}"
        )));
    }
    let eig = r.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |row, col| eig.eigenvectors[(row, order[col])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        signal_dim,
    })
}

/// Inverse of the Gram matrix `Aᴴ A`, rejecting it when its reciprocal
/// condition number (λ_min / λ_max) falls below [`RCOND_FLOOR`].
pub fn gram_inverse(a: &CMatrix) -> Result<CMatrix> {
    let gram = a.adjoint() * a;
    let q = gram.nrows();
    if q == 1 {
        let g = gram[(0, 0)].re;
        if g <= 0.0 {
            return Err(DoaError::Conditioning {
                rcond: 0.0,
                threshold: RCOND_FLOOR,
            });
        }
        return Ok(CMatrix::from_element(1, 1, Complex64::new(1.0 / g, 0.0)));
    }
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= RCOND_FLOOR) {
        return Err(DoaError::Conditioning {
            rcond,
            threshold: RCOND_FLOOR,
        });
    }
    let mut inv = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        inv.column_mut(j).scale_mut(1.0 / l);
    }
    let mut inv = inv * eig.eigenvectors.adjoint();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Orthonormal basis for the column span of `a` (modified Gram-Schmidt,
/// applied twice). Errors if a column is numerically dependent on the
/// previous ones.
pub fn orthonormal_basis(a: &CMatrix) -> Result<CMatrix> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        let original = q.column(j).norm();
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dotc(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, Complex64::new(1.0, 0.0));
            }
        }
        let norm = q.column(j).norm();
        let ratio = if original > 0.0 { (norm / original).powi(2) } else { 0.0 };
        if !(ratio >= RCOND_FLOOR) {
            return Err(DoaError::Conditioning {
                rcond: ratio,
                threshold: RCOND_FLOOR,
            });
        }
        q.column_mut(j).unscale_mut(norm);
    }
    Ok(q)
}

/// Evaluates `Σ c_i z^i` (ascending coefficients) and its derivative.
pub fn poly_eval(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All roots of the polynomial with ascending coefficients `coeffs`,
/// via the eigenvalues of its companion matrix followed by a few guarded
/// Newton steps.
pub fn poly_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(DoaError::Shape("zero polynomial".into()));
    }
    let tiny = scale * f64::EPSILON;
    let mut hi = coeffs.len() - 1;
    while coeffs[hi].norm() <= tiny {
        hi -= 1;
    }
    let mut lo = 0;
    while coeffs[lo].norm() <= tiny && lo < hi {
        lo += 1;
    }
    let trimmed = &coeffs[lo..=hi];
    let degree = trimmed.len() - 1;
    let mut roots = vec![Complex64::new(0.0, 0.0); lo];
    if degree == 0 {
        return Ok(roots);
    }

    let lead = trimmed[degree];
    let mut companion = CMatrix::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -trimmed[i] / lead;
    }
    let schur = Schur::try_new(companion, f64::EPSILON, 10_000)
        .ok_or_else(|| DoaError::Shape("companion eigenvalues did not converge".into()))?;
    let (_, t) = schur.unpack();

    for i in 0..degree {
        let mut z = t[(i, i)];
        let mut residual = poly_eval(trimmed, z).0.norm();
        for _ in 0..4 {
            let (p, dp) = poly_eval(trimmed, z);
            if dp.norm() == 0.0 {
                break;
            }
            let next = z - p / dp;
            let next_residual = poly_eval(trimmed, next).0.norm();
            if next_residual < residual {
                z = next;
                residual = next_residual;
            } else {
                break;
            }
        }
        roots.push(z);
    }
    Ok(roots)
}
