use serde::{Deserialize, Serialize};

/// Which estimator (or pipeline stage) produced an [`AngleEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Truth,
    RootMusic,
    MlGrid,
    MlAp,
    /// Weighted average of per-subarray estimates.
    Combined,
    /// AP refinement on a candidate set.
    Refined,
    /// External per-subarray network prediction.
    Prediction,
}

/// Q source angles in degrees, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub angles_deg: Vec<f64>,
    pub stage: Stage,
}

impl AngleEstimate {
    /// Builds an estimate, sorting the angles ascending.
    pub fn new(mut angles_deg: Vec<f64>, stage: Stage) -> Self {
        angles_deg.sort_by(f64::total_cmp);
        Self { angles_deg, stage }
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }
}
