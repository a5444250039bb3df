//! Threshold separation of the superposed compensator output.

use crate::das::DasImage;
use crate::error::{Error, Result};
use crate::metrics::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// The object appears with negative sign; it is flipped before thresholding.
    NegativeObject,
    PositiveObject,
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" | "negative_object" => Ok(Polarity::NegativeObject),
            "positive" | "positive_object" => Ok(Polarity::PositiveObject),
            other => Err(Error::InvalidParameter(format!(
                "unknown polarity {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdConfig {
    pub tau_fraction: f64,
    pub polarity: Polarity,
}

impl ThresholdConfig {
    pub fn new(tau_fraction: f64, polarity: Polarity) -> Result<Self> {
        if !(0.0..1.0).contains(&tau_fraction) {
            return Err(Error::InvalidParameter(format!(
                "tau_fraction must lie in [0, 1), got {tau_fraction}"
            )));
        }
        Ok(ThresholdConfig {
            tau_fraction,
            polarity,
        })
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            tau_fraction: 0.1,
            polarity: Polarity::NegativeObject,
        }
    }
}

/// Values kept by the threshold, before normalization.
pub fn threshold_raw(values: &[f64], config: &ThresholdConfig) -> Vec<f64> {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tau = config.tau_fraction * peak;
    let sign = match config.polarity {
        Polarity::NegativeObject => -1.0,
        Polarity::PositiveObject => 1.0,
    };
    values.iter().map(|v| (sign * v - tau).max(0.0)).collect()
}

/// Keep the object-polarity part above `tau_fraction * max|v|`, then
/// min-max normalize to `[0, 1]`.
pub fn threshold_separate(sum_g: &DasImage, config: &ThresholdConfig) -> Result<DasImage> {
    if sum_g.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "image contains non-finite values".into(),
        ));
    }
    let kept = threshold_raw(&sum_g.values, config);
    DasImage::new(sum_g.height, sum_g.width, normalize(&kept))
}
