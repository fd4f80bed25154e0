//! Direction-of-arrival estimation for large uniform linear arrays.
//!
//! The crate covers the full chain used to study low-complexity DOA
//! estimators on massive-MIMO receive arrays:
//!
//! * [`array`]: ULA geometry, steering vectors, overlapped subarray plans,
//!   snapshot synthesis and sample covariances.
//! * [`classical`]: projection-matrix ML objective, exhaustive grid search,
//!   alternating-projection (AP) refinement and Root-MUSIC.
//! * [`opsc`]: overlapped partitioned subarray coherent combining (OPSC):
//!   per-subarray Root-MUSIC, 1/K combining and a narrow AP refinement.
//! * [`metrics`]: deterministic CRLB, RMSE and closed-form FLOP models.
//! * [`harness`]: Monte Carlo sweeps, dataset export for the per-subarray
//!   CNN regressors, and the combine-and-refine stage fed by their predictions.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled
//! (default) and fall back to plain iterators otherwise; see [`exec`].

pub mod array;
pub mod classical;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod opsc;

pub use array::{
    extract_subarray, plan_subarrays, sample_covariance, steering_vector, synthesize,
    ArrayConfig, CovarianceMatrix, SnapshotBlock, SourceModel, SourceScene, SubarrayPlan,
};
pub use error::{DoaError, Result};
pub use estimate::{AngleEstimate, Stage};
pub use exec::Execution;

pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
