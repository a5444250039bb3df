use crate::error::{Error, Result};
use crate::io::config::Settings;
use crate::loss::LossWeights;

/// Layer widths of the two network paths. Not exposed as settings keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    pub encoder1: usize,
    pub encoder2: usize,
    pub image_features: usize,
    pub rgc_blocks: usize,
    pub rgc_hidden: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Widths {
            encoder1: 16,
            encoder2: 32,
            image_features: 8,
            rgc_blocks: 3,
            rgc_hidden: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub grid: usize,
    pub total_channels: usize,
    pub input_channels: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    pub enable_response: bool,
    pub enable_overlay: bool,
    /// `y_hat = y0 - residual_sign * sum_g`.
    pub residual_sign: f64,
    pub tau_fraction: f64,
    pub seed: u64,
    pub widths: Widths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::from_settings(&Settings::default())
    }
}

impl TrainConfig {
    pub fn from_settings(s: &Settings) -> Self {
        TrainConfig {
            grid: s.grid,
            total_channels: s.num_elements,
            input_channels: s.input_channels,
            epochs: s.epochs,
            batch: s.batch,
            lr: s.lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: s.weights,
            enable_response: s.enable_response,
            enable_overlay: s.enable_overlay,
            residual_sign: s.residual_sign,
            tau_fraction: s.tau_fraction,
            seed: s.seed,
            widths: Widths::default(),
        }
    }

    pub fn output_channels(&self) -> usize {
        self.total_channels - self.input_channels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.input_channels == 0 || self.input_channels >= self.total_channels {
            return bad(format!(
                "input_channels must lie in [1, {}), got {}",
                self.total_channels, self.input_channels
            ));
        }
        if self.grid < 4 || !self.grid.is_multiple_of(4) {
            return bad(format!(
                "grid side {} must be a positive multiple of 4 (two 2x downsamplings)",
                self.grid
            ));
        }
        if self.epochs == 0 || self.batch == 0 {
            return bad("epochs and batch must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment coefficients must lie in [0, 1)".into());
        }
        if self.residual_sign != 1.0 && self.residual_sign != -1.0 {
            return bad(format!(
                "residual_sign must be 1 or -1, got {}",
                self.residual_sign
            ));
        }
        if !(0.0..1.0).contains(&self.tau_fraction) {
            return bad(format!(
                "tau_fraction must lie in [0, 1), got {}",
                self.tau_fraction
            ));
        }
        let w = self.widths;
        if [w.encoder1, w.encoder2, w.image_features, w.rgc_hidden].contains(&0) {
            return bad("layer widths must be >= 1".into());
        }
        self.weights.validate()
    }
}
