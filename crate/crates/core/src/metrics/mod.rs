//! Benchmarks for the estimators: deterministic CRLB, RMSE and the
//! closed-form FLOP counts.

mod crlb;
mod flops;

pub use crlb::{crlb, crlb_rms_deg, crlb_with_source_covariance, steering_derivative};
pub use flops::{
    flops_ml_ap, flops_nn_forward, flops_opsc, flops_osap_cnn, grid_point_count, ml_cost_per_point,
    ConvLayerDims, FilterTerms, FlopModel, NnForwardSpec,
};

use crate::error::{DoaError, Result};
use crate::estimate::AngleEstimate;

/// Root mean square error in degrees over every trial and source.
/// Both sides are sorted ascending, so sources pair by rank.
pub fn rmse(estimates: &[AngleEstimate], truths: &[AngleEstimate]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(DoaError::Shape(format!(
            "{} estimates vs {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(DoaError::Shape("no trials".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        if e.len() != t.len() {
            return Err(DoaError::Shape(format!(
                "estimate has {} angles, truth has {}",
                e.len(),
                t.len()
            )));
        }
        for (a, b) in e.angles_deg.iter().zip(&t.angles_deg) {
            sum += (a - b).powi(2);
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::Stage;
    use approx::assert_abs_diff_eq;

    fn est(v: &[f64]) -> AngleEstimate {
        AngleEstimate::new(v.to_vec(), Stage::Refined)
    }

    #[test]
    fn rmse_hand_cases() {
        let t = vec![est(&[-10.0, 20.0]), est(&[5.0, 6.0])];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse(&[est(&[12.0])], &[est(&[10.0])]).unwrap(), 2.0);
        let e = vec![est(&[1.0, 11.0]), est(&[3.0, 13.0])];
        let t = vec![est(&[0.0, 10.0]), est(&[0.0, 10.0])];
        assert_abs_diff_eq!(rmse(&e, &t).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn rmse_shape_errors() {
        assert!(rmse(&[est(&[1.0])], &[]).is_err());
        assert!(rmse(&[est(&[1.0])], &[est(&[1.0, 2.0])]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn rmse_invariant_to_trial_order() {
        let e = vec![est(&[1.0]), est(&[4.0]), est(&[-2.0])];
        let t = vec![est(&[0.0]), est(&[5.5]), est(&[-2.5])];
        let mut er = e.clone();
        let mut tr = t.clone();
        er.reverse();
        tr.reverse();
        assert_eq!(rmse(&e, &t).unwrap(), rmse(&er, &tr).unwrap());
    }
}
