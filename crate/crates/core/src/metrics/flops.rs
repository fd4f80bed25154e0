//! Closed-form operation counts.
//!
//! * OPSC: `K (M³ − M² + M L (2M + 1))`
//! * ML-AP: `(π/σ + 1) q · c(N, Q)`
//! * OSAP-CBAM-CNN refinement: `ε̃ · c(N, Q)`
//! * network forward pass: `Σ_k Σ_c M_c² e_c² F_{c−1}² F_c² + Σ_k Σ_ds n_ds n_{ds+1}`
//!
//! where `c(N, Q) = 2N²(Q − 1) + 3N² + 4N(Q − 1)²` is the cost of one
//! projection-objective evaluation. All evaluations are exact in f64 for
//! the magnitudes involved (< 2^53).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{DoaError, Result};

pub fn flops_opsc(k: usize, m: usize, snapshots: usize) -> f64 {
    let (k, m, l) = (k as f64, m as f64, snapshots as f64);
    k * (m * m * m - m * m + m * l * (2.0 * m + 1.0))
}

/// `2N²(Q − 1) + 3N² + 4N(Q − 1)²`.
pub fn ml_cost_per_point(n: usize, sources: usize) -> f64 {
    let n = n as f64;
    let qm1 = sources as f64 - 1.0;
    2.0 * n * n * qm1 + 3.0 * n * n + 4.0 * n * qm1 * qm1
}

/// `π/σ + 1`. `π/σ` counts grid intervals over [−π/2, π/2], so it is snapped
/// to the nearest integer when within 1e-9 relative of one.
pub fn grid_point_count(sigma_rad: f64) -> f64 {
    let intervals = PI / sigma_rad;
    let nearest = intervals.round();
    if (intervals - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest + 1.0
    } else {
        intervals + 1.0
    }
}

/// ML-AP baseline with `sources` = Q emitters and `search_dims` = q.
pub fn flops_ml_ap(n: usize, sources: usize, search_dims: usize, sigma_rad: f64) -> f64 {
    grid_point_count(sigma_rad) * search_dims as f64 * ml_cost_per_point(n, sources)
}

/// Final AP selection over a candidate set of `eps_tilde` one-dimensional points.
pub fn flops_osap_cnn(n: usize, sources: usize, eps_tilde: usize) -> f64 {
    eps_tilde as f64 * ml_cost_per_point(n, sources)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterTerms {
    /// `F_{c−1}² F_c²`, as the closed form is usually quoted.
    #[default]
    AsPrinted,
    /// `F_{c−1} F_c`, the usual multiply count of a convolution.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerDims {
    /// Output side length M_c.
    pub out_dim: usize,
    /// Kernel side e_c.
    pub kernel: usize,
    /// F_{c−1}.
    pub in_filters: usize,
    /// F_c.
    pub out_filters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnForwardSpec {
    /// Number of identical per-subarray networks, K.
    pub networks: usize,
    pub conv: Vec<ConvLayerDims>,
    /// Widths of consecutive dense layers; adjacent pairs contribute
    /// `n_ds · n_{ds+1}`.
    pub dense_widths: Vec<usize>,
    pub filter_terms: FilterTerms,
}

impl NnForwardSpec {
    /// Derives layer dimensions for an unpadded conv stack on an `m × m ×
    /// channels` input. `conv` holds `(filters, kernel, stride)`; the dense
    /// chain runs from the flattened feature map through `hidden` to `outputs`.
    pub fn from_architecture(
        networks: usize,
        m: usize,
        channels: usize,
        conv: &[(usize, usize, usize)],
        hidden: &[usize],
        outputs: usize,
    ) -> Result<Self> {
        let mut side = m;
        let mut filters = channels;
        let mut layers = Vec::with_capacity(conv.len());
        for (c, &(f, e, s)) in conv.iter().enumerate() {
            if s == 0 || e == 0 || e > side || (side - e) % s != 0 {
                return Err(DoaError::Shape(format!(
                    "conv layer {}: ({side} − {e})/{s} + 1 is not a positive integer",
                    c + 1
                )));
            }
            let out = (side - e) / s + 1;
            layers.push(ConvLayerDims {
                out_dim: out,
                kernel: e,
                in_filters: filters,
                out_filters: f,
            });
            side = out;
            filters = f;
        }
        let mut dense_widths = vec![side * side * filters];
        dense_widths.extend_from_slice(hidden);
        dense_widths.push(outputs);
        Ok(Self {
            networks,
            conv: layers,
            dense_widths,
            filter_terms: FilterTerms::AsPrinted,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (c, pair) in self.conv.windows(2).enumerate() {
            if pair[0].out_filters != pair[1].in_filters {
                return Err(DoaError::Shape(format!(
                    "conv layer {} outputs {} filters but layer {} expects {}",
                    c + 1,
                    pair[0].out_filters,
                    c + 2,
                    pair[1].in_filters
                )));
            }
        }
        Ok(())
    }
}

pub fn flops_nn_forward(spec: &NnForwardSpec) -> Result<f64> {
    spec.validate()?;
    let conv: f64 = spec
        .conv
        .iter()
        .map(|l| {
            let mc = l.out_dim as f64;
            let e = l.kernel as f64;
            let (fi, fo) = (l.in_filters as f64, l.out_filters as f64);
            let filters = match spec.filter_terms {
                FilterTerms::AsPrinted => fi * fi * fo * fo,
                FilterTerms::Conventional => fi * fo,
            };
            mc * mc * e * e * filters
        })
        .sum();
    let dense: f64 = spec
        .dense_widths
        .windows(2)
        .map(|w| w[0] as f64 * w[1] as f64)
        .sum();
    Ok(spec.networks as f64 * (conv + dense))
}

/// One estimator's operation-count model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "kebab-case")]
pub enum FlopModel {
    MlAp {
        n: usize,
        sources: usize,
        search_dims: usize,
        sigma_rad: f64,
        /// AP sweep multiplier; 1 reproduces the bare formula.
        iterations: usize,
    },
    Opsc {
        k: usize,
        m: usize,
        snapshots: usize,
    },
    OsapCnn {
        n: usize,
        sources: usize,
        eps_tilde: usize,
    },
    NnForward(NnForwardSpec),
}

impl FlopModel {
    pub fn evaluate(&self) -> Result<f64> {
        match self {
            FlopModel::MlAp {
                n,
                sources,
                search_dims,
                sigma_rad,
                iterations,
            } => {
                if !(*sigma_rad > 0.0) || *n == 0 || *sources == 0 || *search_dims == 0 {
                    return Err(DoaError::InvalidConfig("ML-AP parameters must be positive".into()));
                }
                Ok(*iterations as f64 * flops_ml_ap(*n, *sources, *search_dims, *sigma_rad))
            }
            FlopModel::Opsc { k, m, snapshots } => Ok(flops_opsc(*k, *m, *snapshots)),
            FlopModel::OsapCnn {
                n,
                sources,
                eps_tilde,
            } => Ok(flops_osap_cnn(*n, *sources, *eps_tilde)),
            FlopModel::NnForward(spec) => flops_nn_forward(spec),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opsc_hand_values() {
        assert_eq!(flops_opsc(7, 32, 1000), 14_782_208.0);
        assert_eq!(flops_opsc(1, 1, 1), 3.0);
        assert!(flops_opsc(7, 32, 2000) > flops_opsc(7, 32, 1000));
        // 3·(16³ − 16² + 16·200·33) = 3·(4096 − 256 + 105600)
        assert_eq!(flops_opsc(3, 16, 200), 328_320.0);
        // 7·(8³ − 8² + 8·200·17) = 7·(512 − 64 + 27200)
        assert_eq!(flops_opsc(7, 8, 200), 193_536.0);
        // 7·(256³ − 256² + 256·1000·513) = 7·(16777216 − 65536 + 131328000)
        assert_eq!(flops_opsc(7, 256, 1000), 1_036_277_760.0);
    }

    #[test]
    fn ml_ap_hand_values() {
        let sigma = PI / 1800.0;
        assert_eq!(grid_point_count(sigma), 1801.0);
        assert_eq!(flops_ml_ap(128, 2, 2, sigma), 296_920_064.0);
        assert_eq!(flops_ml_ap(1024, 2, 2, sigma), 3602.0 * 5_246_976.0);
        assert_eq!(ml_cost_per_point(64, 1), 3.0 * 64.0 * 64.0);
        // σ = π/180 (1°): 181·2·(2·32² + 3·32² + 4·32) = 362·5248
        assert_eq!(flops_ml_ap(32, 2, 2, PI / 180.0), 1_899_776.0);
        // Q = 3: 2·16²·2 + 3·16² + 4·16·4 = 1024 + 768 + 256
        assert_eq!(ml_cost_per_point(16, 3), 2048.0);
    }

    #[test]
    fn osap_hand_values() {
        assert_eq!(flops_osap_cnn(128, 2, 82), 6_759_424.0);
        assert_eq!(flops_osap_cnn(128, 2, 1), ml_cost_per_point(128, 2));
        let sigma = PI / 1800.0;
        for n in [32, 64, 128, 256, 512, 1024] {
            let ratio = flops_ml_ap(n, 2, 2, sigma) / flops_osap_cnn(n, 2, 82);
            assert!((ratio - 3602.0 / 82.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nn_forward_printed_form() {
        let spec = NnForwardSpec {
            networks: 1,
            conv: vec![ConvLayerDims {
                out_dim: 30,
                kernel: 3,
                in_filters: 2,
                out_filters: 8,
            }],
            dense_widths: vec![],
            filter_terms: FilterTerms::AsPrinted,
        };
        assert_eq!(flops_nn_forward(&spec).unwrap(), 900.0 * 9.0 * 4.0 * 64.0);
        let conventional = NnForwardSpec {
            filter_terms: FilterTerms::Conventional,
            ..spec.clone()
        };
        assert_eq!(flops_nn_forward(&conventional).unwrap(), 900.0 * 9.0 * 16.0);
        let seven = NnForwardSpec {
            networks: 7,
            ..spec.clone()
        };
        assert_eq!(flops_nn_forward(&seven).unwrap(), 7.0 * flops_nn_forward(&spec).unwrap());
    }

    #[test]
    fn nn_architecture_bookkeeping() {
        let spec =
            NnForwardSpec::from_architecture(1, 32, 2, &[(8, 3, 1), (16, 3, 1)], &[64], 2).unwrap();
        assert_eq!(spec.conv[0].out_dim, 30);
        assert_eq!(spec.conv[1].out_dim, 28);
        assert_eq!(spec.dense_widths, vec![28 * 28 * 16, 64, 2]);
        assert!(NnForwardSpec::from_architecture(1, 32, 2, &[(8, 5, 2)], &[], 2).is_err());

        let mut bad = spec.clone();
        bad.conv[1].in_filters = 4;
        assert!(flops_nn_forward(&bad).is_err());
    }

    #[test]
    fn flop_model_dispatch() {
        let m = FlopModel::MlAp {
            n: 128,
            sources: 2,
            search_dims: 2,
            sigma_rad: PI / 1800.0,
            iterations: 3,
        };
        assert_eq!(m.evaluate().unwrap(), 3.0 * 296_920_064.0);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"estimator\":\"ml-ap\""));
        assert_eq!(
            FlopModel::Opsc {
                k: 7,
                m: 32,
                snapshots: 1000
            }
            .evaluate()
            .unwrap(),
            14_782_208.0
        );
    }
}
