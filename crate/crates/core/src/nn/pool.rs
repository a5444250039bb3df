//! Max and average pooling with optional zero-free padding.
//!
//! Padded positions never win a max and are excluded from averages, so an
//! average over a constant input is that constant everywhere.

use super::Tensor4;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    pub fn new(kind: PoolKind, window: usize, stride: usize) -> Self {
        PoolSpec {
            kind,
            window,
            stride,
            padding: 0,
        }
    }

    /// Stride-1 pooling that preserves spatial size (odd windows).
    pub fn same(kind: PoolKind, window: usize) -> Self {
        PoolSpec {
            kind,
            window,
            stride: 1,
            padding: window / 2,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter(
                "pool window and stride must be >= 1".into(),
            ));
        }
        if self.padding >= self.window {
            return Err(Error::InvalidParameter(
                "pool padding must be below the window".into(),
            ));
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.window || pw < self.window {
            return Err(Error::ShapeMismatch(format!(
                "{h}x{w} input smaller than pool window {}",
                self.window
            )));
        }
        Ok((
            (ph - self.window) / self.stride + 1,
            (pw - self.window) / self.stride + 1,
        ))
    }

    /// Valid input rows (or columns) covered by output index `o`.
    fn span(&self, o: usize, len: usize) -> (usize, usize) {
        let start = (o * self.stride) as isize - self.padding as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + self.window as isize).min(len as isize)) as usize;
        (lo, hi)
    }
}

/// Pooled output plus, for max pooling, the flat input index each output
/// took its value from.
pub struct PoolOutput {
    pub output: Tensor4,
    pub argmax: Vec<usize>,
}

pub fn pool2d(input: &Tensor4, spec: &PoolSpec) -> Result<PoolOutput> {
    let (oh, ow) = spec.output_hw(input.height(), input.width())?;
    let (ih, iw) = (input.height(), input.width());
    let mut output = Tensor4::zeros([input.batch(), input.channels(), oh, ow]);
    let mut argmax = Vec::new();
    if spec.kind == PoolKind::Max {
        argmax.reserve(output.len());
    }
    for b in 0..input.batch() {
        for c in 0..input.channels() {
            let src = input.plane(b, c);
            let dst = output.plane_mut(b, c);
            for oy in 0..oh {
                let (y0, y1) = spec.span(oy, ih);
                for ox in 0..ow {
                    let (x0, x1) = spec.span(ox, iw);
                    match spec.kind {
                        PoolKind::Max => {
                            // Strict comparison keeps the first maximum in
                            // row-major order.
                            let mut best = (y0 * iw + x0, src[y0 * iw + x0]);
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    let v = src[y * iw + x];
                                    if v > best.1 {
                                        best = (y * iw + x, v);
                                    }
                                }
                            }
                            dst[oy * ow + ox] = best.1;
                            argmax.push(best.0);
                        }
                        PoolKind::Avg => {
                            let mut acc = 0.0;
                            for y in y0..y1 {
                                acc += src[y * iw + x0..y * iw + x1].iter().sum::<f64>();
                            }
                            dst[oy * ow + ox] = acc / ((y1 - y0) * (x1 - x0)) as f64;
                        }
                    }
                }
            }
        }
    }
    Ok(PoolOutput { output, argmax })
}

pub fn pool2d_backward(
    input_shape: [usize; 4],
    spec: &PoolSpec,
    forward: &PoolOutput,
    grad_out: &Tensor4,
) -> Result<Tensor4> {
    let (ih, iw) = (input_shape[2], input_shape[3]);
    let (oh, ow) = spec.output_hw(ih, iw)?;
    if grad_out.shape != [input_shape[0], input_shape[1], oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "pool output gradient has shape {:?}",
            grad_out.shape
        )));
    }
    let mut grad = Tensor4::zeros(input_shape);
    let per_plane = oh * ow;
    for b in 0..input_shape[0] {
        for c in 0..input_shape[1] {
            let g = grad_out.plane(b, c);
            let plane_index = b * input_shape[1] + c;
            let dst = grad.plane_mut(b, c);
            for oy in 0..oh {
                let (y0, y1) = spec.span(oy, ih);
                for ox in 0..ow {
                    let gv = g[oy * ow + ox];
                    match spec.kind {
                        PoolKind::Max => {
                            dst[forward.argmax[plane_index * per_plane + oy * ow + ox]] += gv;
                        }
                        PoolKind::Avg => {
                            let (x0, x1) = spec.span(ox, iw);
                            let share = gv / ((y1 - y0) * (x1 - x0)) as f64;
                            for y in y0..y1 {
                                for d in &mut dst[y * iw + x0..y * iw + x1] {
                                    *d += share;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}
