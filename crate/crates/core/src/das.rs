//! Position-wise delay-and-sum.
//!
//! [`position_wise`] delays each channel's trace onto every pixel, giving one
//! signed sub-image per channel. [`superpose`] sums sub-images into a DAS
//! image; summing all channels of a full ring is plain DAS.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::SignalSet;
use crate::geometry::{ChannelSet, DelayTable, ImageGrid};
use crate::phantom::PressureMap;

/// Per-channel delayed data `C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionWiseStack {
    pub data: Vec<f64>,
    /// Global channel indices, strictly increasing.
    pub channel_ids: Vec<usize>,
    pub grid: ImageGrid,
}

impl PositionWiseStack {
    pub fn new(data: Vec<f64>, channel_ids: Vec<usize>, grid: ImageGrid) -> Result<Self> {
        if channel_ids.is_empty() {
            return Err(Error::ShapeMismatch(
                "stack needs at least one channel".into(),
            ));
        }
        if data.len() != channel_ids.len() * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} channels of {}x{}",
                data.len(),
                channel_ids.len(),
                grid.height,
                grid.width
            )));
        }
        if channel_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "channel ids must be strictly increasing".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite stack value".into()));
        }
        Ok(PositionWiseStack {
            data,
            channel_ids,
            grid,
        })
    }

    pub fn channels(&self) -> usize {
        self.channel_ids.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Keep only the listed local channel positions.
    pub fn select(&self, local: &[usize]) -> Result<PositionWiseStack> {
        let mut data = Vec::with_capacity(local.len() * self.grid.len());
        let mut ids = Vec::with_capacity(local.len());
        for &c in local {
            if c >= self.channels() {
                return Err(Error::InvalidParameter(format!(
                    "channel {c} outside stack of {}",
                    self.channels()
                )));
            }
            data.extend_from_slice(self.channel(c));
            ids.push(self.channel_ids[c]);
        }
        PositionWiseStack::new(data, ids, self.grid)
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}

/// A (possibly signed) image, with the channels it was superposed from.
#[derive(Debug, Clone, PartialEq)]
pub struct DasImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub provenance: Vec<usize>,
}

impl DasImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} image",
                values.len()
            )));
        }
        Ok(DasImage {
            height,
            width,
            values,
            provenance: Vec::new(),
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        DasImage {
            height,
            width,
            values: vec![0.0; height * width],
            provenance: Vec::new(),
        }
    }

    pub fn from_pressure(p0: &PressureMap) -> Self {
        DasImage {
            height: p0.grid.height,
            width: p0.grid.width,
            values: p0.values.clone(),
            provenance: Vec::new(),
        }
    }

    pub fn same_shape(&self, other: &DasImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn argmax(&self) -> (usize, usize) {
        let i = self
            .values
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |a, (i, &v)| if v > a.1 { (i, v) } else { a },
            )
            .0;
        (i / self.width, i % self.width)
    }
}

/// Sample each selected channel at its per-pixel time of flight.
pub fn position_wise(
    signals: &SignalSet,
    grid: &ImageGrid,
    table: &DelayTable,
    channels: &ChannelSet,
) -> Result<PositionWiseStack> {
    if table.height != grid.height || table.width != grid.width {
        return Err(Error::ShapeMismatch(format!(
            "delay table is {}x{}, grid is {}x{}",
            table.height, table.width, grid.height, grid.width
        )));
    }
    if table.channels != signals.channels {
        return Err(Error::ShapeMismatch(format!(
            "delay table has {} channels, signals have {}",
            table.channels, signals.channels
        )));
    }
    if channels.range().end > signals.channels || channels.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "channels {:?} outside {} recorded channels",
            channels.range(),
            signals.channels
        )));
    }
    let n = grid.len();
    let samples_per_meter = signals.sampling_rate / signals.sound_speed;
    let last = (signals.samples_per_channel - 1) as f64;
    let mut data = vec![0.0; channels.len() * n];
    data.par_chunks_mut(n)
        .zip(channels.range().into_par_iter())
        .for_each(|(out, c)| {
            let trace = signals.channel(c);
            for (o, &r) in out.iter_mut().zip(table.channel(c)) {
                let tau = r * samples_per_meter;
                *o = if (0.0..=last).contains(&tau) {
                    let i = tau.floor() as usize;
                    let frac = tau - i as f64;
                    if frac == 0.0 {
                        trace[i]
                    } else {
                        trace[i] * (1.0 - frac) + trace[i + 1] * frac
                    }
                } else {
                    0.0
                };
            }
        });
    PositionWiseStack::new(data, channels.to_vec(), *grid)
}

pub fn superpose(stack: &PositionWiseStack) -> DasImage {
    let n = stack.grid.len();
    let mut values = vec![0.0; n];
    for c in 0..stack.channels() {
        for (v, d) in values.iter_mut().zip(stack.channel(c)) {
            *v += d;
        }
    }
    DasImage {
        height: stack.grid.height,
        width: stack.grid.width,
        values,
        provenance: stack.channel_ids.clone(),
    }
}

/// Object/artifact split of a stack by the (dilated) support of `p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub object_part: PositionWiseStack,
    pub artifact_part: PositionWiseStack,
    pub support_mask: Vec<bool>,
}

/// Chebyshev (8-neighbourhood) dilation by `radius` pixels.
pub fn dilate(mask: &[bool], height: usize, width: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut out = vec![false; mask.len()];
    for h in 0..height {
        for w in 0..width {
            if !mask[h * width + w] {
                continue;
            }
            for hh in h.saturating_sub(radius)..=(h + radius).min(height - 1) {
                for ww in w.saturating_sub(radius)..=(w + radius).min(width - 1) {
                    out[hh * width + ww] = true;
                }
            }
        }
    }
    out
}

pub fn decompose(
    stack: &PositionWiseStack,
    p0: &PressureMap,
    dilation: usize,
) -> Result<Decomposition> {
    if p0.grid.height != stack.grid.height || p0.grid.width != stack.grid.width {
        return Err(Error::ShapeMismatch(
            "pressure map and stack grids differ".into(),
        ));
    }
    let (h, w) = (stack.grid.height, stack.grid.width);
    let support_mask = dilate(&p0.support(), h, w, dilation);
    let n = stack.grid.len();
    let mut object = vec![0.0; stack.data.len()];
    let mut artifact = vec![0.0; stack.data.len()];
    for (i, &v) in stack.data.iter().enumerate() {
        if support_mask[i % n] {
            object[i] = v;
        } else {
            artifact[i] = v;
        }
    }
    Ok(Decomposition {
        object_part: PositionWiseStack::new(object, stack.channel_ids.clone(), stack.grid)?,
        artifact_part: PositionWiseStack::new(artifact, stack.channel_ids.clone(), stack.grid)?,
        support_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{build_impulse_response, simulate_signals};
    use crate::geometry::{build_delay_table, view_mask, ArrayGeometry};
    use crate::phantom::gen_discs;

    #[test]
    fn impulse_lands_on_annulus() {
        let g = ArrayGeometry::full_ring(8, 0.018).unwrap();
        let grid = ImageGrid::square(32, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let (fs, c) = (40e6, 1480.0);
        let n0 = 600usize;
        let mut samples = vec![0.0; 8 * 1200];
        samples[3 * 1200 + n0] = 1.0;
        let s = SignalSet::new(samples, 8, fs, c, g).unwrap();
        let stack = position_wise(&s, &grid, &t, &view_mask(&g, 0, 8).unwrap()).unwrap();
        for ch in 0..8 {
            for (i, &v) in stack.channel(ch).iter().enumerate() {
                let tau = t.channel(ch)[i] * fs / c;
                let on_ring = (tau - n0 as f64).abs() < 1.0;
                if ch == 3 && on_ring {
                    assert!((v - (1.0 - (tau - n0 as f64).abs())).abs() < 1e-12);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_signals_zero_stack() {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let grid = ImageGrid::square(16, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let s = SignalSet::new(vec![0.0; 128 * 1100], 128, 40e6, 1480.0, g).unwrap();
        let q = position_wise(&s, &grid, &t, &view_mask(&g, 0, 32).unwrap()).unwrap();
        assert_eq!(q.channels(), 32);
        assert_eq!(q.channel_ids, (0..32).collect::<Vec<_>>());
        assert!(q.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_table_rejected() {
        let g = ArrayGeometry::full_ring(8, 0.018).unwrap();
        let grid = ImageGrid::square(16, 0.026).unwrap();
        let other = ImageGrid::square(8, 0.026).unwrap();
        let t = build_delay_table(&g, &other);
        let s = SignalSet::new(vec![0.0; 8 * 100], 8, 40e6, 1480.0, g).unwrap();
        assert!(position_wise(&s, &grid, &t, &view_mask(&g, 0, 8).unwrap()).is_err());
    }

    #[test]
    fn single_channel_superposition_is_identity() {
        let grid = ImageGrid::square(4, 1.0).unwrap();
        let data: Vec<f64> = (0..16).map(|i| i as f64 - 3.5).collect();
        let s = PositionWiseStack::new(data.clone(), vec![5], grid).unwrap();
        let img = superpose(&s);
        assert_eq!(img.values, data);
        assert_eq!(img.provenance, vec![5]);
    }

    #[test]
    fn centered_point_focuses() {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let grid = ImageGrid::square(33, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let r = build_impulse_response(2.5e6, 1.1, 40e6).unwrap();
        let mut p0 = PressureMap::zeros(grid);
        p0.values[16 * 33 + 16] = 1.0;
        let s = simulate_signals(&p0, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
        let full = position_wise(&s, &grid, &t, &view_mask(&g, 0, 128).unwrap()).unwrap();
        let (h, w) = superpose(&full).argmax();
        assert!(h.abs_diff(16) <= 1 && w.abs_diff(16) <= 1, "({h}, {w})");
    }

    #[test]
    fn decomposition_partitions_exactly() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let data: Vec<f64> = (0..128).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let stack = PositionWiseStack::new(data.clone(), vec![0, 1], grid).unwrap();

        let zero = decompose(&stack, &PressureMap::zeros(grid), 1).unwrap();
        assert!(zero.object_part.data.iter().all(|&v| v == 0.0));
        assert_eq!(zero.artifact_part.data, data);

        let mut p0 = PressureMap::zeros(grid);
        p0.values[3 * 8 + 4] = 0.5;
        let d = decompose(&stack, &p0, 0).unwrap();
        for c in 0..2 {
            for i in 0..64 {
                if i != 3 * 8 + 4 {
                    assert_eq!(d.object_part.channel(c)[i], 0.0);
                }
            }
        }
        let d1 = decompose(&stack, &p0, 1).unwrap();
        assert_eq!(d1.support_mask.iter().filter(|&&b| b).count(), 9);
        for (i, &v) in data.iter().enumerate() {
            assert_eq!(d1.object_part.data[i] + d1.artifact_part.data[i], v);
        }
    }

    #[test]
    fn object_and_artifact_parts_have_similar_scale() {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let grid = ImageGrid::square(32, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let r = build_impulse_response(2.5e6, 1.1, 40e6).unwrap();
        for seed in 0..10 {
            let p0 = gen_discs(&grid, seed, 2).unwrap();
            let s = simulate_signals(&p0, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
            let stack = position_wise(&s, &grid, &t, &view_mask(&g, 0, 128).unwrap()).unwrap();
            let d = decompose(&stack, &p0, 1).unwrap();
            let n = grid.len();
            let inside = d.support_mask.iter().filter(|&&b| b).count();
            let mean = |part: &PositionWiseStack, keep: bool| {
                let mut sum = 0.0;
                for (i, v) in part.data.iter().enumerate() {
                    if d.support_mask[i % n] == keep {
                        sum += v.abs();
                    }
                }
                let count = if keep { inside } else { n - inside } * 128;
                sum / count as f64
            };
            let ratio = mean(&d.object_part, true) / mean(&d.artifact_part, false);
            assert!(ratio > 0.1 && ratio < 10.0, "seed {seed}: {ratio}");
        }
    }

    #[test]
    fn channel_order_does_not_matter() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let data: Vec<f64> = (0..64 * 6).map(|i| ((i as f64) * 0.731).sin()).collect();
        let s = PositionWiseStack::new(data, (0..6).collect(), grid).unwrap();
        let a = superpose(&s);
        let mut rev = superpose(&s.select(&[5]).unwrap());
        for c in (0..5).rev() {
            for (v, d) in rev.values.iter_mut().zip(s.channel(c)) {
                *v += d;
            }
        }
        for (x, y) in a.values.iter().zip(&rev.values) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
