//! ULA geometry, overlapped subarray plans, snapshot synthesis and sample
//! covariances.
//!
//! All phases are referenced to global element 0 (the left end of the
//! array). A subarray keeps the global phase of its first element, so its
//! steering vector is the corresponding slice of the full-array one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{DoaError, Result};
use crate::{CMatrix, CVector, Complex64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_elements: usize,
    /// Element spacing over wavelength, d/λ.
    pub spacing_ratio: f64,
    /// Informational only; every formula uses `spacing_ratio`.
    pub carrier_wavelength: f64,
}

impl ArrayConfig {
    pub fn new(n_elements: usize, spacing_ratio: f64) -> Result<Self> {
        if n_elements < 2 {
            return Err(DoaError::InvalidConfig(format!(
                "need at least 2 elements, got {n_elements}"
            )));
        }
        if !(spacing_ratio > 0.0 && spacing_ratio.is_finite()) {
            return Err(DoaError::InvalidConfig(format!(
                "spacing ratio must be positive, got {spacing_ratio}"
            )));
        }
        Ok(Self {
            n_elements,
            spacing_ratio,
            carrier_wavelength: 1.0,
        })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(n_elements: usize) -> Result<Self> {
        Self::new(n_elements, 0.5)
    }
}

/// Partition of N elements into K equal subarrays of M elements where
/// neighbours share M0 elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarrayPlan {
    pub n_elements: usize,
    pub m_elements: usize,
    pub overlap: usize,
    pub k_subarrays: usize,
    pub offsets: Vec<usize>,
}

impl SubarrayPlan {
    pub fn stride(&self) -> usize {
        self.m_elements - self.overlap
    }

    /// Global element indices covered by subarray `k`.
    pub fn range(&self, k: usize) -> Result<std::ops::Range<usize>> {
        let start = *self.offsets.get(k).ok_or(DoaError::SubarrayIndex {
            index: k,
            count: self.k_subarrays,
        })?;
        Ok(start..start + self.m_elements)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceModel {
    /// Unit-power i.i.d. circular complex Gaussian waveforms, mutually
    /// uncorrelated.
    #[default]
    UncorrelatedGaussian,
    /// One unit-power Gaussian waveform shared by every source, scaled by
    /// the unit-modulus gain `exp(jπq/Q)` for source q.
    Coherent,
}

impl SourceModel {
    /// Complex gain applied to the common waveform for source `q` of `count`.
    pub fn coherent_gain(q: usize, count: usize) -> Complex64 {
        Complex64::from_polar(1.0, PI * q as f64 / count as f64)
    }

    /// Nominal Q×Q source covariance implied by the model.
    pub fn source_covariance(self, count: usize) -> CMatrix {
        match self {
            SourceModel::UncorrelatedGaussian => CMatrix::identity(count, count),
            SourceModel::Coherent => {
                let g = CVector::from_fn(count, |q, _| Self::coherent_gain(q, count));
                &g * g.adjoint()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScene {
    pub angles_deg: Vec<f64>,
    /// Total signal power over per-antenna noise power, in dB. `+∞`
    /// disables noise.
    pub snr_db: f64,
    pub n_snapshots: usize,
    pub seed: u64,
    pub source_model: SourceModel,
}

impl SourceScene {
    pub fn new(
        angles_deg: Vec<f64>,
        snr_db: f64,
        n_snapshots: usize,
        seed: u64,
        source_model: SourceModel,
    ) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(DoaError::InvalidScene("no sources".into()));
        }
        for &a in &angles_deg {
            if !(a > -90.0 && a < 90.0) {
                return Err(DoaError::InvalidScene(format!(
                    "source angle {a}° outside (-90, 90)"
                )));
            }
        }
        if angles_deg.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DoaError::InvalidScene(
                "angles must be strictly ascending and distinct".into(),
            ));
        }
        if n_snapshots == 0 {
            return Err(DoaError::InvalidScene("zero snapshots".into()));
        }
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(DoaError::InvalidScene(format!("bad SNR {snr_db}")));
        }
        Ok(Self {
            angles_deg,
            snr_db,
            n_snapshots,
            seed,
            source_model,
        })
    }

    pub fn n_sources(&self) -> usize {
        self.angles_deg.len()
    }

    /// σ_w² = Q / 10^(SNR/10), so unit-power sources give the requested
    /// total-signal-to-noise ratio per antenna. Zero when noise is disabled.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            self.n_sources() as f64 / 10f64.powf(self.snr_db / 10.0)
        }
    }

    pub fn noise_disabled(&self) -> bool {
        self.noise_variance() == 0.0
    }
}

/// Complex baseband samples, one row per element and one column per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    pub samples: CMatrix,
    pub scene: SourceScene,
    /// Global index of the element in row 0.
    pub first_element: usize,
}

impl SnapshotBlock {
    pub fn n_elements(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.samples.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub entries: CMatrix,
    /// Number of snapshots averaged; 0 for analytic (model) covariances.
    pub n_averaged: usize,
}

impl CovarianceMatrix {
    /// Wraps a matrix after checking it is square and Hermitian to 1e-12
    /// relative.
    pub fn new(entries: CMatrix, n_averaged: usize) -> Result<Self> {
        if !entries.is_square() {
            return Err(DoaError::Shape(format!(
                "covariance must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let asym = crate::linalg::hermitian_residual(&entries);
        if asym > 1e-12 {
            return Err(DoaError::NotHermitian(asym));
        }
        Ok(Self {
            entries,
            n_averaged,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// `c · R`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: self.entries.map(|z| z * c),
            n_averaged: self.n_averaged,
        }
    }
}

fn check_angle(theta_deg: f64) -> Result<()> {
    if (-90.0..=90.0).contains(&theta_deg) {
        Ok(())
    } else {
        Err(DoaError::AngleDomain(theta_deg))
    }
}

/// Spatial frequency 2π(d/λ)sin θ, radians per element.
pub(crate) fn spatial_frequency(theta_deg: f64, spacing_ratio: f64) -> f64 {
    2.0 * PI * spacing_ratio * theta_deg.to_radians().sin()
}

/// Steering vector of `n` consecutive elements starting at global index
/// `offset`: entry i is `exp(j·2π·(d/λ)·(offset+i)·sin θ)`.
pub fn steering_vector(
    theta_deg: f64,
    n: usize,
    spacing_ratio: f64,
    offset: usize,
) -> Result<CVector> {
    check_angle(theta_deg)?;
    Ok(steering_unchecked(theta_deg, n, spacing_ratio, offset))
}

pub(crate) fn steering_unchecked(
    theta_deg: f64,
    n: usize,
    spacing_ratio: f64,
    offset: usize,
) -> CVector {
    let omega = spatial_frequency(theta_deg, spacing_ratio);
    CVector::from_fn(n, |i, _| {
        Complex64::from_polar(1.0, omega * (offset + i) as f64)
    })
}

/// Array manifold: one steering vector per column.
pub fn manifold(
    angles_deg: &[f64],
    n: usize,
    spacing_ratio: f64,
    offset: usize,
) -> Result<CMatrix> {
    let mut a = CMatrix::zeros(n, angles_deg.len());
    for (q, &theta) in angles_deg.iter().enumerate() {
        a.set_column(q, &steering_vector(theta, n, spacing_ratio, offset)?);
    }
    Ok(a)
}

/// Model covariance `A P Aᴴ + σ² I` (no sampling).
pub fn model_covariance(
    angles_deg: &[f64],
    source_cov: &CMatrix,
    noise_variance: f64,
    n: usize,
    spacing_ratio: f64,
    offset: usize,
) -> Result<CovarianceMatrix> {
    let a = manifold(angles_deg, n, spacing_ratio, offset)?;
    let mut r = &a * source_cov * a.adjoint();
    for i in 0..n {
        r[(i, i)] += Complex64::new(noise_variance, 0.0);
    }
    crate::linalg::symmetrize(&mut r);
    CovarianceMatrix::new(r, 0)
}

pub fn plan_subarrays(config: &ArrayConfig, m: usize, m0: usize) -> Result<SubarrayPlan> {
    let n = config.n_elements;
    if m == 0 || m > n {
        return Err(DoaError::InvalidConfig(format!(
            "subarray size M = {m} must be in 1..={n}"
        )));
    }
    if m0 >= m {
        return Err(DoaError::InvalidConfig(format!(
            "overlap M0 = {m0} must be smaller than M = {m}"
        )));
    }
    let stride = m - m0;
    let numerator = n - m0;
    if !numerator.is_multiple_of(stride) {
        return Err(DoaError::NonIntegerPartition {
            numerator,
            denominator: stride,
        });
    }
    let k_subarrays = numerator / stride;
    Ok(SubarrayPlan {
        n_elements: n,
        m_elements: m,
        overlap: m0,
        k_subarrays,
        offsets: (0..k_subarrays).map(|k| k * stride).collect(),
    })
}

/// Draws `y(n) = A(θ) s(n) + v(n)` for every snapshot. Source waveforms are
/// drawn before noise from one ChaCha8 stream seeded by `scene.seed`.
pub fn synthesize(config: &ArrayConfig, scene: &SourceScene) -> Result<SnapshotBlock> {
    let n = config.n_elements;
    let q = scene.n_sources();
    let j = scene.n_snapshots;
    let a = manifold(&scene.angles_deg, n, config.spacing_ratio, 0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let mut cn = || {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    };

    let signals = match scene.source_model {
        SourceModel::UncorrelatedGaussian => CMatrix::from_fn(q, j, |_, _| cn()),
        SourceModel::Coherent => {
            let common: Vec<Complex64> = (0..j).map(|_| cn()).collect();
            CMatrix::from_fn(q, j, |s, t| SourceModel::coherent_gain(s, q) * common[t])
        }
    };
    let mut samples = &a * &signals;

    let noise_var = scene.noise_variance();
    if noise_var > 0.0 {
        let scale = noise_var.sqrt();
        // column-major fill keeps the draw order fixed: element fastest
        let noise = CMatrix::from_fn(n, j, |_, _| cn() * scale);
        samples += noise;
    }

    Ok(SnapshotBlock {
        samples,
        scene: scene.clone(),
        first_element: 0,
    })
}

/// Rows of subarray `k` of `block`.
pub fn extract_subarray(
    block: &SnapshotBlock,
    plan: &SubarrayPlan,
    k: usize,
) -> Result<SnapshotBlock> {
    if block.n_elements() != plan.n_elements {
        return Err(DoaError::Shape(format!(
            "block has {} elements, plan expects {}",
            block.n_elements(),
            plan.n_elements
        )));
    }
    let range = plan.range(k)?;
    Ok(SnapshotBlock {
        samples: block.samples.rows(range.start, range.len()).into_owned(),
        scene: block.scene.clone(),
        first_element: block.first_element + range.start,
    })
}

/// `(1/J) Σ y yᴴ` over the block's snapshots.
pub fn sample_covariance(block: &SnapshotBlock) -> Result<CovarianceMatrix> {
    covariance_from_samples(&block.samples)
}

/// Sample covariance of a raw elements × snapshots matrix.
pub fn covariance_from_samples(y: &CMatrix) -> Result<CovarianceMatrix> {
    let j = y.ncols();
    if j == 0 {
        return Err(DoaError::Shape("no snapshots".into()));
    }
    let mut r: CMatrix = y * y.adjoint();
    r /= Complex64::new(j as f64, 0.0);
    crate::linalg::symmetrize(&mut r);
    CovarianceMatrix::new(r, j)
}
