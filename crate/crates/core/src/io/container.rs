//! PWD1 tensor container.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `PWD1`                            |
//! | 4      | 4    | version (u32, = 1)                      |
//! | 8      | 4    | kind (u32)                              |
//! | 12     | 12   | dim0, dim1, dim2 (u32, unused = 1)      |
//! | 24     | 48   | six f64 metadata values (unused = 0)    |
//! | 72     | 4·n  | payload, f32, slowest dimension first   |
//!
//! Metadata order: sampling rate (Hz), sound speed (m/s), extent (m), ring
//! radius (m), angle start (rad), angle span (rad).

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ImageGrid};

pub const MAGIC: [u8; 4] = *b"PWD1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// `C x T` detector time series.
    Signal,
    /// `H x W` image.
    Image,
    /// `C x H x W` per-channel delayed data.
    PositionWise,
    /// `H x W` mask, nonzero = inside.
    Mask,
}

impl Kind {
    pub fn code(self) -> u32 {
        match self {
            Kind::Signal => 0,
            Kind::Image => 1,
            Kind::PositionWise => 2,
            Kind::Mask => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Kind> {
        Some(match code {
            0 => Kind::Signal,
            1 => Kind::Image,
            2 => Kind::PositionWise,
            3 => Kind::Mask,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerHeader {
    pub kind: Kind,
    pub dims: [u32; 3],
    pub sampling_rate_hz: f64,
    pub sound_speed_mps: f64,
    pub extent_m: f64,
    pub ring_radius_m: f64,
    pub angle_start_rad: f64,
    pub angle_span_rad: f64,
}

impl ContainerHeader {
    pub fn new(kind: Kind, dims: [u32; 3]) -> Self {
        ContainerHeader {
            kind,
            dims,
            sampling_rate_hz: 0.0,
            sound_speed_mps: 0.0,
            extent_m: 0.0,
            ring_radius_m: 0.0,
            angle_start_rad: 0.0,
            angle_span_rad: 0.0,
        }
    }

    /// Header for an `H x W` image or mask on `grid`.
    pub fn image(kind: Kind, grid: &ImageGrid) -> Self {
        let mut h = Self::new(kind, [grid.height as u32, grid.width as u32, 1]);
        h.extent_m = grid.extent;
        h
    }

    pub fn with_geometry(mut self, geometry: &ArrayGeometry) -> Self {
        self.ring_radius_m = geometry.ring_radius;
        self.angle_start_rad = geometry.angle_start;
        self.angle_span_rad = geometry.angle_span;
        self
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    fn metadata(&self) -> [f64; 6] {
        [
            self.sampling_rate_hz,
            self.sound_speed_mps,
            self.extent_m,
            self.ring_radius_m,
            self.angle_start_rad,
            self.angle_span_rad,
        ]
    }

    pub fn grid(&self) -> Result<ImageGrid> {
        let (h, w) = match self.kind {
            Kind::Image | Kind::Mask => (self.dims[0], self.dims[1]),
            Kind::PositionWise => (self.dims[1], self.dims[2]),
            Kind::Signal => {
                return Err(Error::InvalidParameter(
                    "signal containers carry no image grid".into(),
                ))
            }
        };
        ImageGrid::new(h as usize, w as usize, self.extent_m)
    }

    pub fn geometry(&self, num_elements: usize) -> Result<ArrayGeometry> {
        ArrayGeometry::new(
            num_elements,
            self.ring_radius_m,
            self.angle_start_rad,
            self.angle_span_rad,
            (0.0, 0.0),
        )
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&self.kind.code().to_le_bytes());
        for (i, d) in self.dims.iter().enumerate() {
            out[12 + 4 * i..16 + 4 * i].copy_from_slice(&d.to_le_bytes());
        }
        for (i, m) in self.metadata().iter().enumerate() {
            out[24 + 8 * i..32 + 8 * i].copy_from_slice(&m.to_le_bytes());
        }
        out
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Encode a container in memory. Values are narrowed to f32.
pub fn encode(header: &ContainerHeader, payload: &[f64]) -> Result<Vec<u8>> {
    if header.dims.contains(&0) {
        return Err(Error::InvalidParameter(
            "container dims must be >= 1".into(),
        ));
    }
    if header.element_count() != payload.len() {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} values, payload has {}",
            header.element_count(),
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * payload.len());
    out.extend_from_slice(&header.to_bytes());
    for &v in payload {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<(ContainerHeader, Vec<f64>)> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            found: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: MAGIC,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.into(),
            found: bytes.len(),
            expected: HEADER_LEN,
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: version,
            expected: VERSION,
        });
    }
    let kind = Kind::from_code(u32_at(bytes, 8)).ok_or_else(|| Error::Format {
        path: path.into(),
        message: format!("unknown kind {}", u32_at(bytes, 8)),
    })?;
    let dims = [u32_at(bytes, 12), u32_at(bytes, 16), u32_at(bytes, 20)];
    if dims.contains(&0) {
        return Err(Error::Format {
            path: path.into(),
            message: format!("zero dimension in {dims:?}"),
        });
    }
    let header = ContainerHeader {
        kind,
        dims,
        sampling_rate_hz: f64_at(bytes, 24),
        sound_speed_mps: f64_at(bytes, 32),
        extent_m: f64_at(bytes, 40),
        ring_radius_m: f64_at(bytes, 48),
        angle_start_rad: f64_at(bytes, 56),
        angle_span_rad: f64_at(bytes, 64),
    };
    let expected = header.element_count() * 4;
    let body = &bytes[HEADER_LEN..];
    if body.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            found: body.len(),
            expected,
        });
    }
    if body.len() > expected {
        return Err(Error::Format {
            path: path.into(),
            message: format!("{} trailing bytes after payload", body.len() - expected),
        });
    }
    let payload = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((header, payload))
}

pub fn write_container(path: &Path, header: &ContainerHeader, payload: &[f64]) -> Result<()> {
    let bytes = encode(header, payload)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<(ContainerHeader, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

/// Read a container and require a particular kind.
pub fn read_kind(path: &Path, kind: Kind) -> Result<(ContainerHeader, Vec<f64>)> {
    let (h, p) = read_container(path)?;
    if h.kind != kind {
        return Err(Error::Format {
            path: path.into(),
            message: format!("expected a {kind:?} container, found {:?}", h.kind),
        });
    }
    Ok((h, p))
}
