//! Image quality metrics.
//!
//! SSIM and PSNR compare images after min-max normalizing each one to
//! `[0, 1]` with its own range; a constant image normalizes to all zeros.
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) over valid positions, with
//! stability constants `(0.01 L)^2` and `(0.03 L)^2`, `L = 1`.

use crate::das::DasImage;
use crate::error::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub name: &'static str,
    pub value: f64,
    pub reference_id: String,
    pub test_id: String,
    pub parameters: String,
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.value.is_infinite() {
            write!(f, "{}=inf", self.name)
        } else {
            write!(f, "{}={:.12}", self.name, self.value)
        }
    }
}

/// Rescale to `[0, 1]`; a zero-range image maps to zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let range = hi - lo;
    if range > 0.0 {
        values.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn check_pair(a: &DasImage, b: &DasImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut w = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            w.push((-d2 / (2.0 * SIGMA * SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Mean structural similarity of two normalized images.
pub fn ssim(reference: &DasImage, test: &DasImage) -> Result<f64> {
    check_pair(reference, test)?;
    let (h, w) = (reference.height, reference.width);
    let x = normalize(&reference.values);
    let y = normalize(&test.values);
    // Images smaller than the window use the largest odd window that fits.
    let mut size = WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let win = gaussian_window(size);
    let mut total = 0.0;
    let mut count = 0usize;
    for oy in 0..=h - size {
        for ox in 0..=w - size {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..size {
                for kx in 0..size {
                    let g = win[ky * size + kx];
                    let i = (oy + ky) * w + ox + kx;
                    mx += g * x[i];
                    my += g * y[i];
                    sxx += g * x[i] * x[i];
                    syy += g * y[i] * y[i];
                    sxy += g * x[i] * y[i];
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                / ((mx * mx + my * my + C1) * (vx + vy + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Peak signal-to-noise ratio in dB with peak 1 after normalization.
/// Identical normalized images give `f64::INFINITY`.
pub fn psnr(reference: &DasImage, test: &DasImage) -> Result<f64> {
    check_pair(reference, test)?;
    let x = normalize(&reference.values);
    let y = normalize(&test.values);
    let mse = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// `|mean(roi) - mean(background)| / std(background)`, population std.
pub fn cnr(image: &DasImage, roi: &[bool], background: &[bool]) -> Result<f64> {
    let n = image.values.len();
    if roi.len() != n || background.len() != n {
        return Err(Error::ShapeMismatch("mask size differs from image".into()));
    }
    if roi.iter().zip(background).any(|(a, b)| *a && *b) {
        return Err(Error::InvalidParameter(
            "roi and background masks overlap".into(),
        ));
    }
    let stats = |mask: &[bool]| -> Result<(f64, f64)> {
        let vals: Vec<f64> = image
            .values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect();
        if vals.is_empty() {
            return Err(Error::InvalidParameter("empty mask".into()));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        Ok((mean, var.sqrt()))
    };
    let (roi_mean, _) = stats(roi)?;
    let (bg_mean, bg_std) = stats(background)?;
    if bg_std == 0.0 {
        return Err(Error::Undefined(
            "background standard deviation is zero".into(),
        ));
    }
    Ok((roi_mean - bg_mean).abs() / bg_std)
}
