//! Bottleneck connector fusing max- and average-pooled features.
//!
//! For an `m`-channel `n x n` input, each channel is pooled twice with a
//! stride-1, same-size 3x3 window (max and average). The two maps are fused
//! with one weight per channel, per position and per branch:
//!
//! `out[c, i, j] = w_max[c, i, j] * max3(x)[c, i, j] + w_avg[c, i, j] * avg3(x)[c, i, j]`
//!
//! giving `2 m n^2` parameters, against `m n^4` for a dense spatial layer.

use super::pool::{pool2d, pool2d_backward, PoolKind, PoolSpec};
use super::Tensor4;
use crate::error::{Error, Result};

const WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SctmParams {
    pub channels: usize,
    pub side: usize,
    pub w_max: Vec<f64>,
    pub w_avg: Vec<f64>,
}

impl SctmParams {
    pub fn zeros(channels: usize, side: usize) -> Self {
        SctmParams {
            channels,
            side,
            w_max: vec![0.0; channels * side * side],
            w_avg: vec![0.0; channels * side * side],
        }
    }

    /// Number of stored scalars.
    pub fn parameter_count(&self) -> usize {
        self.w_max.len() + self.w_avg.len()
    }

    pub fn view(&self) -> SctmWeights<'_> {
        SctmWeights {
            channels: self.channels,
            side: self.side,
            w_max: &self.w_max,
            w_avg: &self.w_avg,
        }
    }
}

/// Borrowed SCTM weights.
#[derive(Debug, Clone, Copy)]
pub struct SctmWeights<'a> {
    pub channels: usize,
    pub side: usize,
    pub w_max: &'a [f64],
    pub w_avg: &'a [f64],
}

impl SctmWeights<'_> {
    fn check(&self, input: &Tensor4) -> Result<()> {
        let per = self.channels * self.side * self.side;
        if self.w_max.len() != per || self.w_avg.len() != per {
            return Err(Error::ShapeMismatch(format!(
                "SCTM weights hold {} + {} values, expected {per} each",
                self.w_max.len(),
                self.w_avg.len()
            )));
        }
        if input.channels() != self.channels
            || input.height() != self.side
            || input.width() != self.side
        {
            return Err(Error::ShapeMismatch(format!(
                "SCTM configured for {}x{}x{}, input is {:?}",
                self.channels, self.side, self.side, input.shape
            )));
        }
        Ok(())
    }
}

pub struct SctmGrads {
    pub input: Tensor4,
    pub w_max: Vec<f64>,
    pub w_avg: Vec<f64>,
}

fn pooled(input: &Tensor4) -> Result<(super::pool::PoolOutput, super::pool::PoolOutput)> {
    Ok((
        pool2d(input, &PoolSpec::same(PoolKind::Max, WINDOW))?,
        pool2d(input, &PoolSpec::same(PoolKind::Avg, WINDOW))?,
    ))
}

pub fn sctm_forward(input: &Tensor4, weights: SctmWeights<'_>) -> Result<Tensor4> {
    weights.check(input)?;
    let (mp, ap) = pooled(input)?;
    let per = weights.w_max.len();
    let mut out = Tensor4::zeros(input.shape);
    for (i, o) in out.data.iter_mut().enumerate() {
        let k = i % per;
        *o = weights.w_max[k] * mp.output.data[i] + weights.w_avg[k] * ap.output.data[i];
    }
    Ok(out)
}

pub fn sctm_backward(
    input: &Tensor4,
    weights: SctmWeights<'_>,
    grad_out: &Tensor4,
) -> Result<SctmGrads> {
    weights.check(input)?;
    if grad_out.shape != input.shape {
        return Err(Error::ShapeMismatch("SCTM output gradient shape".into()));
    }
    let (mp, ap) = pooled(input)?;
    let per = weights.w_max.len();
    let mut gw_max = vec![0.0; per];
    let mut gw_avg = vec![0.0; per];
    let mut g_mp = Tensor4::zeros(input.shape);
    let mut g_ap = Tensor4::zeros(input.shape);
    for (i, &g) in grad_out.data.iter().enumerate() {
        let k = i % per;
        gw_max[k] += g * mp.output.data[i];
        gw_avg[k] += g * ap.output.data[i];
        g_mp.data[i] = g * weights.w_max[k];
        g_ap.data[i] = g * weights.w_avg[k];
    }
    let mut grad_input = pool2d_backward(
        input.shape,
        &PoolSpec::same(PoolKind::Max, WINDOW),
        &mp,
        &g_mp,
    )?;
    grad_input.add_assign(&pool2d_backward(
        input.shape,
        &PoolSpec::same(PoolKind::Avg, WINDOW),
        &ap,
        &g_ap,
    )?);
    Ok(SctmGrads {
        input: grad_input,
        w_max: gw_max,
        w_avg: gw_avg,
    })
}
