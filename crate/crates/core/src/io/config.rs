//! `key = value` settings files.
//!
//! Blank lines and `#` comments are ignored. Unknown and repeated keys are
//! errors, and every error carries its 1-based line number.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::LossWeights;

pub const KEYS: [&str; 23] = [
    "grid",
    "extent_m",
    "ring_radius_m",
    "num_elements",
    "input_channels",
    "sampling_rate_hz",
    "sound_speed_mps",
    "center_frequency_hz",
    "fractional_bandwidth",
    "duration_s",
    "noise_std",
    "lambda_re",
    "lambda_ov",
    "lambda_tex",
    "lambda_rec",
    "enable_response",
    "enable_overlay",
    "residual_sign",
    "tau_fraction",
    "epochs",
    "batch",
    "lr",
    "seed",
];

/// Every tunable of the pipeline and the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub grid: usize,
    pub extent_m: f64,
    pub ring_radius_m: f64,
    pub num_elements: usize,
    pub input_channels: usize,
    pub sampling_rate_hz: f64,
    pub sound_speed_mps: f64,
    pub center_frequency_hz: f64,
    pub fractional_bandwidth: f64,
    pub duration_s: f64,
    pub noise_std: f64,
    pub weights: LossWeights,
    pub enable_response: bool,
    pub enable_overlay: bool,
    pub residual_sign: f64,
    pub tau_fraction: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            grid: 32,
            extent_m: 0.026,
            ring_radius_m: 0.018,
            num_elements: 32,
            input_channels: 8,
            sampling_rate_hz: 40e6,
            sound_speed_mps: 1480.0,
            center_frequency_hz: 2.5e6,
            fractional_bandwidth: 1.1,
            duration_s: 30e-6,
            noise_std: 0.0,
            weights: LossWeights::SYNTHETIC,
            enable_response: true,
            enable_overlay: true,
            residual_sign: 1.0,
            tau_fraction: 0.1,
            epochs: 200,
            batch: 4,
            lr: 1e-3,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {value:?} as a value for {key}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("cannot parse {value:?} as a boolean for {key}")),
    }
}

impl Settings {
    /// Assign one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "grid" => self.grid = parse_num(key, value)?,
            "extent_m" => self.extent_m = parse_num(key, value)?,
            "ring_radius_m" => self.ring_radius_m = parse_num(key, value)?,
            "num_elements" => self.num_elements = parse_num(key, value)?,
            "input_channels" => self.input_channels = parse_num(key, value)?,
            "sampling_rate_hz" => self.sampling_rate_hz = parse_num(key, value)?,
            "sound_speed_mps" => self.sound_speed_mps = parse_num(key, value)?,
            "center_frequency_hz" => self.center_frequency_hz = parse_num(key, value)?,
            "fractional_bandwidth" => self.fractional_bandwidth = parse_num(key, value)?,
            "duration_s" => self.duration_s = parse_num(key, value)?,
            "noise_std" => self.noise_std = parse_num(key, value)?,
            "lambda_re" => self.weights.lambda_re = parse_num(key, value)?,
            "lambda_ov" => self.weights.lambda_ov = parse_num(key, value)?,
            "lambda_tex" => self.weights.lambda_tex = parse_num(key, value)?,
            "lambda_rec" => self.weights.lambda_rec = parse_num(key, value)?,
            "enable_response" => self.enable_response = parse_bool(key, value)?,
            "enable_overlay" => self.enable_overlay = parse_bool(key, value)?,
            "residual_sign" => {
                let s: f64 = parse_num(key, value)?;
                if s != 1.0 && s != -1.0 {
                    return Err(format!("residual_sign must be 1 or -1, got {value}"));
                }
                self.residual_sign = s;
            }
            "tau_fraction" => self.tau_fraction = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch" => self.batch = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Settings> {
        let mut settings = Settings::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, found {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key {key:?}"),
                });
            }
            settings
                .set(key, value)
                .map_err(|message| Error::Config { line, message })?;
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Settings::parse_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(Settings::parse_str("").unwrap(), Settings::default());
        assert_eq!(
            Settings::parse_str("# only a comment\n\n").unwrap(),
            Settings::default()
        );
    }

    #[test]
    fn weights_verbatim() {
        let s = Settings::parse_str(
            "lambda_re = 130\nlambda_ov = 0.02\nlambda_tex = 42\nlambda_rec = 60 # synthetic\n",
        )
        .unwrap();
        assert_eq!(s.weights, LossWeights::SYNTHETIC);
        assert_eq!(s.weights.lambda_re, 130.0);
    }

    #[test]
    fn bad_value_names_line() {
        let err = Settings::parse_str("grid = 16\nlambda_re = abc\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("lambda_re"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert!(matches!(
            Settings::parse_str("bogus = 1").unwrap_err(),
            Error::Config { line: 1, .. }
        ));
        assert!(matches!(
            Settings::parse_str("seed = 1\n\nseed = 2").unwrap_err(),
            Error::Config { line: 3, .. }
        ));
        assert!(Settings::parse_str("seed 1").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let mut s = Settings::default();
        for key in KEYS {
            let value = match key {
                "enable_response" | "enable_overlay" => "false",
                "residual_sign" => "-1",
                _ => "3",
            };
            s.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
        assert_eq!(s.residual_sign, -1.0);
        assert!(!s.enable_overlay);
        assert!(s.set("residual_sign", "2").is_err());
    }
}
