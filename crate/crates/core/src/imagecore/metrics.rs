use serde::{Deserialize, Serialize};

use super::ImageF;
use crate::Result;

/// PSNR reported for identical images instead of infinity.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Root mean squared difference over all samples of two equally shaped images.
pub fn rmse(a: &ImageF, b: &ImageF) -> Result<f64> {
    a.ensure_same_shape(b, "rmse")?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.data().len() as f64).sqrt())
}

/// Peak signal-to-noise ratio in decibels; identical images report
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageF, b: &ImageF, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(crate::Error::invalid(format!("psnr peak must be positive, got {peak}")));
    }
    Ok(psnr_from_rmse(rmse(a, b)?, peak))
}

pub fn psnr_from_rmse(rmse: f64, peak: f64) -> f64 {
    if rmse == 0.0 {
        return PSNR_CAP_DB;
    }
    20.0 * (peak / rmse).log10()
}

/// Metrics of one predicted layer pair against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub rmse: f64,
    pub psnr: f64,
}

impl SampleMetrics {
    /// Scores `prediction` against `truth` in clipped `[0, 1]` space with unit
    /// peak.
    pub fn evaluate(id: impl Into<String>, prediction: &ImageF, truth: &ImageF) -> Result<Self> {
        let rmse = rmse(&prediction.clip(0.0, 1.0), &truth.clip(0.0, 1.0))?;
        Ok(Self { id: id.into(), rmse, psnr: psnr_from_rmse(rmse, 1.0) })
    }
}

/// Aggregate over a set of images.
///
/// Both means are taken over the per-image values, so `psnr` is the average of
/// per-image PSNRs and generally differs from `-20 log10(rmse)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub psnr: f64,
    pub per_image: Vec<SampleMetrics>,
}

impl MetricReport {
    pub fn from_samples(per_image: Vec<SampleMetrics>) -> Self {
        let n = per_image.len();
        let (rmse, psnr) = if n == 0 {
            (0.0, PSNR_CAP_DB)
        } else {
            let r = per_image.iter().map(|m| m.rmse).sum::<f64>() / n as f64;
            let p = per_image.iter().map(|m| m.psnr).sum::<f64>() / n as f64;
            (r, p)
        };
        Self { rmse, psnr, per_image }
    }
}
