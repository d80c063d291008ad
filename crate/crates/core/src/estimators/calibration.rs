//! Inverse-propensity weighted (Hájek) calibration curves.

use serde::{Deserialize, Serialize};

use super::{OutcomePredictor, PropensityModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBucket {
    /// Unweighted mean prediction in the bucket.
    pub mean_prediction: f64,
    /// `Σ wᵢ yᵢ / Σ wᵢ` with `wᵢ = 1/p̂ᵗ(xᵢ)`.
    pub hajek_outcome_rate: f64,
    pub weight_mass: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub treatment: usize,
    pub buckets: Vec<CalibrationBucket>,
}

/// Sort the rows of the model's arm by prediction (stable), split them into
/// `bucket_count` equal-count buckets, and compare each bucket's prediction
/// with its Hájek-weighted observed outcome.
pub fn weighted_calibration(
    model: &OutcomePredictor,
    data: &Dataset,
    propensity: &PropensityModel,
    bucket_count: usize,
) -> Result<CalibrationCurve> {
    let t = model.treatment;
    let arm = data.arm(t);
    if arm.is_empty() {
        return Err(Error::EmptyArm(t));
    }
    if bucket_count == 0 || bucket_count > arm.len() {
        return Err(Error::invalid(format!(
            "bucket_count {bucket_count} must be in 1..={}",
            arm.len()
        )));
    }
    let rows = data.rows();
    let mut points = Vec::with_capacity(arm.len());
    for &i in &arm {
        let r = &rows[i];
        let prediction = model.predict(&r.covariates, &r.group)?;
        let weight = 1.0 / propensity.predict(&r.covariates, &r.group)?[t];
        points.push((prediction, weight, r.outcome));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = points.len();
    let buckets = (0..bucket_count)
        .map(|b| {
            let slice = &points[b * n / bucket_count..(b + 1) * n / bucket_count];
            let mass: f64 = slice.iter().map(|p| p.1).sum();
            CalibrationBucket {
                mean_prediction: slice.iter().map(|p| p.0).sum::<f64>() / slice.len() as f64,
                hajek_outcome_rate: slice.iter().map(|p| p.1 * p.2).sum::<f64>() / mass,
                weight_mass: mass,
                count: slice.len(),
            }
        })
        .collect();
    Ok(CalibrationCurve {
        treatment: t,
        buckets,
    })
}
