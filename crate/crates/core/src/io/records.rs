//! Typed reads and writes of signals, stacks and images as PWD1 containers.
//!
//! A stack records the arc its channels cover. Channel ids are recovered
//! from that arc assuming the full ring starts at angle 0, which holds for
//! every ring built by [`ArrayGeometry::full_ring`].

use std::path::Path;

use super::container::{read_kind, write_container, ContainerHeader, Kind};
use crate::das::{DasImage, PositionWiseStack};
use crate::error::{Error, Result};
use crate::forward::SignalSet;
use crate::geometry::{ArrayGeometry, ImageGrid};
use crate::phantom::PressureMap;

pub fn write_signals(path: &Path, signals: &SignalSet) -> Result<()> {
    let mut header = ContainerHeader::new(
        Kind::Signal,
        [
            signals.channels as u32,
            signals.samples_per_channel as u32,
            1,
        ],
    )
    .with_geometry(&signals.geometry);
    header.sampling_rate_hz = signals.sampling_rate;
    header.sound_speed_mps = signals.sound_speed;
    write_container(path, &header, &signals.samples)
}

pub fn read_signals(path: &Path) -> Result<SignalSet> {
    let (header, samples) = read_kind(path, Kind::Signal)?;
    let channels = header.dims[0] as usize;
    let geometry = header.geometry(channels)?;
    SignalSet::new(
        samples,
        channels,
        header.sampling_rate_hz,
        header.sound_speed_mps,
        geometry,
    )
}

/// `ring` is the full array the stack's channel ids index into.
pub fn write_stack(path: &Path, stack: &PositionWiseStack, ring: &ArrayGeometry) -> Result<()> {
    let first = stack.channel_ids[0];
    let count = stack.channels();
    if stack
        .channel_ids
        .iter()
        .enumerate()
        .any(|(k, &c)| c != first + k)
    {
        return Err(Error::InvalidParameter(
            "only contiguous channel ranges can be stored".into(),
        ));
    }
    let gap = ring.pitch_angle();
    let arc = ArrayGeometry {
        num_elements: count,
        angle_start: ring.angle_start + first as f64 * gap,
        angle_span: count as f64 * gap,
        ..*ring
    };
    let g = stack.grid;
    let mut header = ContainerHeader::new(
        Kind::PositionWise,
        [count as u32, g.height as u32, g.width as u32],
    )
    .with_geometry(&arc);
    header.extent_m = g.extent;
    write_container(path, &header, &stack.data)
}

pub fn read_stack(path: &Path) -> Result<PositionWiseStack> {
    let (header, data) = read_kind(path, Kind::PositionWise)?;
    let count = header.dims[0] as usize;
    let grid = header.grid()?;
    let first = if header.angle_span_rad > 0.0 {
        let gap = header.angle_span_rad / count as f64;
        (header.angle_start_rad / gap).round().max(0.0) as usize
    } else {
        0
    };
    PositionWiseStack::new(data, (first..first + count).collect(), grid)
}

pub fn write_image(path: &Path, image: &DasImage, extent: f64) -> Result<()> {
    let grid = ImageGrid::new(image.height, image.width, extent)?;
    write_container(
        path,
        &ContainerHeader::image(Kind::Image, &grid),
        &image.values,
    )
}

pub fn read_image(path: &Path) -> Result<(DasImage, ImageGrid)> {
    let (header, values) = read_kind(path, Kind::Image)?;
    let grid = header.grid()?;
    Ok((DasImage::new(grid.height, grid.width, values)?, grid))
}

pub fn write_pressure(path: &Path, p0: &PressureMap) -> Result<()> {
    write_container(
        path,
        &ContainerHeader::image(Kind::Image, &p0.grid),
        &p0.values,
    )
}

/// Mask containers, or images read as masks; nonzero means inside.
pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    let (header, values) = super::container::read_container(path)?;
    match header.kind {
        Kind::Mask | Kind::Image => Ok(values.iter().map(|&v| v != 0.0).collect()),
        other => Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("expected a mask or image container, found {other:?}"),
        }),
    }
}
