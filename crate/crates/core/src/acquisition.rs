//! One simulated acquisition setup: ring, grid, transducer and timing,
//! built once from [`Settings`] and reused for every phantom.

use crate::das::{position_wise, superpose, DasImage, PositionWiseStack};
use crate::error::Result;
use crate::forward::{build_impulse_response, simulate_signals, SignalSet, TransducerResponse};
use crate::geometry::{build_delay_table, view_mask, ArrayGeometry, DelayTable, ImageGrid};
use crate::io::config::Settings;
use crate::phantom::PressureMap;

#[derive(Debug, Clone)]
pub struct Acquisition {
    pub grid: ImageGrid,
    pub geometry: ArrayGeometry,
    pub response: TransducerResponse,
    pub table: DelayTable,
    pub sampling_rate: f64,
    pub sound_speed: f64,
    pub duration: f64,
    pub noise_std: f64,
}

impl Acquisition {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let grid = ImageGrid::square(s.grid, s.extent_m)?;
        let geometry = ArrayGeometry::full_ring(s.num_elements, s.ring_radius_m)?;
        let response = build_impulse_response(
            s.center_frequency_hz,
            s.fractional_bandwidth,
            s.sampling_rate_hz,
        )?;
        let table = build_delay_table(&geometry, &grid);
        Ok(Acquisition {
            grid,
            geometry,
            response,
            table,
            sampling_rate: s.sampling_rate_hz,
            sound_speed: s.sound_speed_mps,
            duration: s.duration_s,
            noise_std: s.noise_std,
        })
    }

    /// Full-ring signals for `p0`, with noise drawn from `noise_seed` when
    /// the noise level is nonzero.
    pub fn simulate(&self, p0: &PressureMap, noise_seed: u64) -> Result<SignalSet> {
        let mut signals = simulate_signals(
            p0,
            &self.geometry,
            &self.grid,
            &self.table,
            &self.response,
            self.sampling_rate,
            self.sound_speed,
            self.duration,
        )?;
        signals.add_noise(self.noise_std, noise_seed)?;
        Ok(signals)
    }

    pub fn position_wise(
        &self,
        signals: &SignalSet,
        first: usize,
        count: usize,
    ) -> Result<PositionWiseStack> {
        let channels = view_mask(&self.geometry, first, count)?;
        position_wise(signals, &self.grid, &self.table, &channels)
    }

    pub fn full_das(&self, signals: &SignalSet) -> Result<DasImage> {
        Ok(superpose(&self.position_wise(
            signals,
            0,
            self.geometry.num_elements,
        )?))
    }
}
