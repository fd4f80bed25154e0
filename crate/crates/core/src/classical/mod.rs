//! Conventional estimators: ML grid search, alternating projection (AP)
//! and Root-MUSIC.

mod ap;
mod grid;
mod projection;
mod root_music;

pub use ap::{ap_refine, ApInit, ApSettings, RefineOutcome};
pub use grid::{ml_grid_search, GridSpec, MAX_GRID_CANDIDATES};
pub use projection::{ml_objective, projection_matrix};
pub use root_music::{
    music_polynomial, root_music, DOUBLE_ROOT_GAP, ROOT_DEDUP_RADIUS, UNIT_CIRCLE_SLACK,
};

pub use crate::linalg::{hermitian_eig, EigenDecomposition};
