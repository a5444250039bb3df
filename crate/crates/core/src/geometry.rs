//! Ring detector geometry, the reconstruction grid, and element-to-pixel
//! distance tables.
//!
//! Elements sit at arc midpoints: element `k` of an `N`-element array spanning
//! `span` radians from `start` lies at angle `start + (k + 0.5) * span / N`.
//! A 128-element ring therefore splits into a 32-element quarter view and a
//! 96-element remainder with no shared endpoints.
//!
//! Pixel `(h, w)` is addressed by its center. Rows grow downward, so row 0 is
//! the top of the image (largest `y`). All lengths are meters.

use std::f64::consts::TAU;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    pub ring_radius: f64,
    pub angle_start: f64,
    pub angle_span: f64,
    pub center: (f64, f64),
}

impl ArrayGeometry {
    /// Full ring centered at the origin, first element half a gap past angle 0.
    pub fn full_ring(num_elements: usize, ring_radius: f64) -> Result<Self> {
        Self::new(num_elements, ring_radius, 0.0, TAU, (0.0, 0.0))
    }

    pub fn new(
        num_elements: usize,
        ring_radius: f64,
        angle_start: f64,
        angle_span: f64,
        center: (f64, f64),
    ) -> Result<Self> {
        let g = ArrayGeometry {
            num_elements,
            ring_radius,
            angle_start,
            angle_span,
            center,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements == 0 {
            return Err(Error::InvalidParameter("num_elements must be >= 1".into()));
        }
        if !(self.ring_radius > 0.0 && self.ring_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ring_radius must be positive, got {}",
                self.ring_radius
            )));
        }
        // Tolerate a few ulps above 2*pi so spans built by summing sub-arcs pass.
        if !(self.angle_span > 0.0 && self.angle_span <= TAU * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "angle_span must lie in (0, 2pi], got {}",
                self.angle_span
            )));
        }
        if !self.angle_start.is_finite() || !self.center.0.is_finite() || !self.center.1.is_finite()
        {
            return Err(Error::InvalidParameter("non-finite geometry".into()));
        }
        Ok(())
    }

    /// Angular gap between neighbouring elements.
    pub fn pitch_angle(&self) -> f64 {
        self.angle_span / self.num_elements as f64
    }

    pub fn element_angle(&self, k: usize) -> f64 {
        self.angle_start + (k as f64 + 0.5) * self.pitch_angle()
    }

    pub fn is_full_ring(&self) -> bool {
        (self.angle_span - TAU).abs() <= 1e-12 * TAU
    }

    /// The geometry of a contiguous channel subset, as an array of its own.
    pub fn subarray(&self, channels: &ChannelSet) -> Result<ArrayGeometry> {
        let r = channels.range();
        if r.end > self.num_elements || r.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "channel range {}..{} outside array of {}",
                r.start, r.end, self.num_elements
            )));
        }
        ArrayGeometry::new(
            r.len(),
            self.ring_radius,
            self.angle_start + r.start as f64 * self.pitch_angle(),
            r.len() as f64 * self.pitch_angle(),
            self.center,
        )
    }
}

pub fn element_positions(geometry: &ArrayGeometry) -> Vec<(f64, f64)> {
    (0..geometry.num_elements)
        .map(|k| {
            let a = geometry.element_angle(k);
            (
                geometry.center.0 + geometry.ring_radius * a.cos(),
                geometry.center.1 + geometry.ring_radius * a.sin(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    pub height: usize,
    pub width: usize,
    /// Physical side length of the imaged region along the width axis.
    pub extent: f64,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, extent: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter(
                "grid dimensions must be >= 1".into(),
            ));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid extent must be positive, got {extent}"
            )));
        }
        Ok(ImageGrid {
            height,
            width,
            extent,
        })
    }

    pub fn square(side: usize, extent: f64) -> Result<Self> {
        Self::new(side, side, extent)
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.extent / self.width as f64
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical coordinates of the center of pixel `(h, w)`.
    pub fn pixel_center(&self, h: usize, w: usize) -> (f64, f64) {
        let p = self.pixel_pitch();
        (
            (w as f64 + 0.5 - self.width as f64 / 2.0) * p,
            (self.height as f64 / 2.0 - h as f64 - 0.5) * p,
        )
    }
}

/// Euclidean distance from each element to each pixel center, laid out
/// channel-major (`C x H x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTable {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub distances: Vec<f64>,
}

impl DelayTable {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.distances[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.distances[(c * self.height + h) * self.width + w]
    }

    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_distance(&self) -> f64 {
        self.distances.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn build_delay_table(geometry: &ArrayGeometry, grid: &ImageGrid) -> DelayTable {
    let elements = element_positions(geometry);
    let n = grid.len();
    let mut distances = vec![0.0; elements.len() * n];
    distances
        .par_chunks_mut(n)
        .zip(elements.par_iter())
        .for_each(|(row, &(ex, ey))| {
            for h in 0..grid.height {
                for w in 0..grid.width {
                    let (px, py) = grid.pixel_center(h, w);
                    row[h * grid.width + w] = (px - ex).hypot(py - ey);
                }
            }
        });
    DelayTable {
        channels: elements.len(),
        height: grid.height,
        width: grid.width,
        distances,
    }
}

/// Contiguous half-open channel range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSet {
    first: usize,
    count: usize,
}

impl ChannelSet {
    pub fn range(&self) -> Range<usize> {
        self.first..self.first + self.count
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.range().collect()
    }
}

pub fn view_mask(
    geometry: &ArrayGeometry,
    first_channel: usize,
    count: usize,
) -> Result<ChannelSet> {
    match first_channel.checked_add(count) {
        Some(end) if end <= geometry.num_elements && count > 0 => Ok(ChannelSet {
            first: first_channel,
            count,
        }),
        _ => Err(Error::InvalidParameter(format!(
            "view {}+{} exceeds {} elements",
            first_channel, count, geometry.num_elements
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn four_elements_at_diagonals() {
        let g = ArrayGeometry::full_ring(4, 1.0).unwrap();
        let want = [FRAC_PI_4, 3.0 * FRAC_PI_4, 5.0 * FRAC_PI_4, 7.0 * FRAC_PI_4];
        for (k, (x, y)) in element_positions(&g).into_iter().enumerate() {
            assert!((x - want[k].cos()).abs() < 1e-15);
            assert!((y - want[k].sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn ring_of_128_lies_on_circle() {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let pts = element_positions(&g);
        assert_eq!(pts.len(), 128);
        for (x, y) in pts {
            assert!(((x.hypot(y) - 0.018) / 0.018).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_arc_stays_within_ninety_degrees() {
        let g = ArrayGeometry::new(32, 0.018, 0.0, FRAC_PI_2, (0.0, 0.0)).unwrap();
        for k in 0..32 {
            let a = g.element_angle(k);
            assert!(a > 0.0 && a < FRAC_PI_2);
        }
    }

    #[test]
    fn uniform_gaps() {
        let g = ArrayGeometry::new(17, 2.0, 0.3, 1.7, (0.1, -0.2)).unwrap();
        let gap = g.pitch_angle();
        for k in 1..17 {
            assert!((g.element_angle(k) - g.element_angle(k - 1) - gap).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ArrayGeometry::full_ring(0, 1.0).is_err());
        assert!(ArrayGeometry::full_ring(4, 0.0).is_err());
        assert!(ArrayGeometry::new(4, 1.0, 0.0, 0.0, (0.0, 0.0)).is_err());
        assert!(ArrayGeometry::new(4, 1.0, 0.0, 7.0, (0.0, 0.0)).is_err());
        assert!(ImageGrid::new(0, 4, 1.0).is_err());
        assert!(ImageGrid::new(4, 4, -1.0).is_err());
    }

    #[test]
    fn element_on_axis_to_center_pixel() {
        // One element at (R, 0): start so that the midpoint lands at angle 0.
        let g = ArrayGeometry::new(1, 0.5, -PI, 2.0 * PI, (0.0, 0.0)).unwrap();
        let (x, y) = element_positions(&g)[0];
        assert!((x - 0.5).abs() < 1e-15 && y.abs() < 1e-15);
        let grid = ImageGrid::square(1, 0.1).unwrap();
        let t = build_delay_table(&g, &grid);
        assert!((t.get(0, 0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_table_by_hand() {
        let g = ArrayGeometry::new(1, 1.0, -PI, 2.0 * PI, (0.0, 0.0)).unwrap();
        let grid = ImageGrid::square(2, 1.0).unwrap();
        let t = build_delay_table(&g, &grid);
        // Pixel centers at (+-0.25, +-0.25); element at (1, 0).
        let near = (0.75f64 * 0.75 + 0.25 * 0.25).sqrt();
        let far = (1.25f64 * 1.25 + 0.25 * 0.25).sqrt();
        assert!((t.get(0, 0, 1) - near).abs() < 1e-15);
        assert!((t.get(0, 1, 1) - near).abs() < 1e-15);
        assert!((t.get(0, 0, 0) - far).abs() < 1e-15);
        assert!((t.get(0, 1, 0) - far).abs() < 1e-15);
        // mirror symmetry about the element's axis (the x axis)
        assert_eq!(t.get(0, 0, 0), t.get(0, 1, 0));
    }

    #[test]
    fn minimum_distance_at_corner() {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let grid = ImageGrid::square(64, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let elements = element_positions(&g);
        let mut oracle = f64::INFINITY;
        for &(ex, ey) in &elements {
            for h in 0..64 {
                for w in 0..64 {
                    let (px, py) = grid.pixel_center(h, w);
                    oracle = oracle.min(((px - ex).powi(2) + (py - ey).powi(2)).sqrt());
                }
            }
        }
        assert!((t.min_distance() - oracle).abs() < 1e-15);
        // The grid corners poke just outside the ring (13*sqrt(2) mm > 18 mm),
        // so the closest approach is the small gap |18 - 13*sqrt(2)| mm,
        // shifted by half a pixel and half an angular gap.
        let ideal = (0.018 - 0.013 * 2f64.sqrt()).abs();
        assert!(
            (t.min_distance() - ideal).abs() < 0.5e-3,
            "{}",
            t.min_distance()
        );
    }

    #[test]
    fn quarter_turn_symmetry() {
        let g = ArrayGeometry::full_ring(16, 0.018).unwrap();
        let grid = ImageGrid::square(8, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let n = 8;
        for k in 0..16 {
            let k2 = (k + 4) % 16;
            for h in 0..n {
                for w in 0..n {
                    let a = t.get(k2, h, w);
                    let b = t.get(k, w, n - 1 - h);
                    assert!((a - b).abs() < 1e-12 * a, "{k} {h} {w}");
                }
            }
        }
    }

    #[test]
    fn view_masks_partition() {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let q = view_mask(&g, 0, 32).unwrap();
        let rest = view_mask(&g, 32, 96).unwrap();
        let mut all: Vec<usize> = q.to_vec();
        all.extend(rest.to_vec());
        assert_eq!(all, (0..128).collect::<Vec<_>>());
        let quarter = g.subarray(&q).unwrap();
        assert!((quarter.angle_span - FRAC_PI_2).abs() < 1e-12);
        assert!((g.subarray(&rest).unwrap().angle_span - 1.5 * PI).abs() < 1e-12);

        let g4 = ArrayGeometry::full_ring(4, 1.0).unwrap();
        assert_eq!(view_mask(&g4, 0, 4).unwrap().to_vec(), vec![0, 1, 2, 3]);
        assert!(view_mask(&g4, 1, 4).is_err());
        assert!(view_mask(&g4, usize::MAX, 2).is_err());
    }
}
