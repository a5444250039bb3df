//! 2-D cross-correlation with square kernels.

use super::Tensor4;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `kernel / 2` on every side.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: Padding::Same,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => self.kernel / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let p = self.pad();
        if h + 2 * p < self.kernel || w + 2 * p < self.kernel {
            return Err(Error::ShapeMismatch(format!(
                "{h}x{w} input smaller than {0}x{0} kernel",
                self.kernel
            )));
        }
        Ok((
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        ))
    }

    fn check(&self, input: &Tensor4, weight: &[f64], bias: &[f64]) -> Result<(usize, usize)> {
        if self.kernel.is_multiple_of(2) || self.stride == 0 {
            return Err(Error::InvalidParameter(format!(
                "kernel must be odd and stride positive (kernel {}, stride {})",
                self.kernel, self.stride
            )));
        }
        if input.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        if weight.len() != self.weight_len() || bias.len() != self.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv parameters have {} weights and {} biases, expected {} and {}",
                weight.len(),
                bias.len(),
                self.weight_len(),
                self.out_channels
            )));
        }
        self.output_hw(input.height(), input.width())
    }

    /// Output columns `ox` whose input column `ox * stride + kx - pad` is in range.
    fn col_range(&self, kx: usize, in_w: usize, out_w: usize) -> (usize, usize) {
        let p = self.pad() as isize;
        let s = self.stride as isize;
        let off = kx as isize - p;
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi = ((in_w as isize - 1 - off).div_euclid(s) + 1).clamp(0, out_w as isize);
        (lo as usize, hi.max(lo) as usize)
    }
}

pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv2d_forward(
    input: &Tensor4,
    spec: &ConvSpec,
    weight: &[f64],
    bias: &[f64],
) -> Result<Tensor4> {
    let (oh, ow) = spec.check(input, weight, bias)?;
    let (ih, iw) = (input.height(), input.width());
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad() as isize);
    let mut out = Tensor4::zeros([input.batch(), spec.out_channels, oh, ow]);
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            let plane = out.plane_mut(b, oc);
            plane.iter_mut().for_each(|v| *v = bias[oc]);
            for ic in 0..spec.in_channels {
                let src = input.plane(b, ic);
                for ky in 0..k {
                    for kx in 0..k {
                        let w = weight[((oc * spec.in_channels + ic) * k + ky) * k + kx];
                        if w == 0.0 {
                            continue;
                        }
                        let (lo, hi) = spec.col_range(kx, iw, ow);
                        for oy in 0..oh {
                            let iy = (oy * s) as isize + ky as isize - p;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            let row = &src[iy as usize * iw..(iy as usize + 1) * iw];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            let base = kx as isize - p;
                            if s == 1 {
                                let start = (lo as isize + base) as usize;
                                for (d, x) in dst[lo..hi].iter_mut().zip(&row[start..]) {
                                    *d += w * x;
                                }
                            } else {
                                for (ox, d) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                                    *d += w * row[(ox as isize * s as isize + base) as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn conv2d_backward(
    input: &Tensor4,
    spec: &ConvSpec,
    weight: &[f64],
    grad_out: &Tensor4,
) -> Result<ConvGrads> {
    let zero_bias = vec![0.0; spec.out_channels];
    let (oh, ow) = spec.check(input, weight, &zero_bias)?;
    if grad_out.shape != [input.batch(), spec.out_channels, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "conv output gradient has shape {:?}",
            grad_out.shape
        )));
    }
    let (ih, iw) = (input.height(), input.width());
    let (k, s, p) = (spec.kernel, spec.stride, spec.pad() as isize);
    let mut grad_input = Tensor4::zeros(input.shape);
    let mut grad_weight = vec![0.0; weight.len()];
    let mut grad_bias = vec![0.0; spec.out_channels];
    for b in 0..input.batch() {
        for oc in 0..spec.out_channels {
            let g = grad_out.plane(b, oc);
            grad_bias[oc] += g.iter().sum::<f64>();
            for ic in 0..spec.in_channels {
                let src = input.plane(b, ic);
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((oc * spec.in_channels + ic) * k + ky) * k + kx;
                        let w = weight[widx];
                        let (lo, hi) = spec.col_range(kx, iw, ow);
                        let base = kx as isize - p;
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * s) as isize + ky as isize - p;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let row = &src[iy * iw..(iy + 1) * iw];
                            let gin = grad_input.plane_mut(b, ic);
                            let gin_row = &mut gin[iy * iw..(iy + 1) * iw];
                            if s == 1 {
                                let start = (lo as isize + base) as usize;
                                for ((gv, x), gi) in grow[lo..hi]
                                    .iter()
                                    .zip(&row[start..])
                                    .zip(gin_row[start..].iter_mut())
                                {
                                    acc += gv * x;
                                    *gi += w * gv;
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = (ox as isize * s as isize + base) as usize;
                                    acc += grow[ox] * row[ix];
                                    gin_row[ix] += w * grow[ox];
                                }
                            }
                        }
                        grad_weight[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}
