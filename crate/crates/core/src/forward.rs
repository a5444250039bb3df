//! Time-of-flight acoustic forward operator.
//!
//! Each pixel of the initial pressure acts as a point source. Its contribution
//! to element `i` is scaled by a cylindrical spreading factor
//! `1 / sqrt(max(r, r_min))`, deposited at fractional sample `r / c * fs` by
//! linear interpolation, and the resulting impulse train is convolved with a
//! Gaussian-modulated transducer kernel. The operator is linear in `p0`.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, DelayTable, ImageGrid};
use crate::phantom::PressureMap;

/// Sampled transducer impulse response.
///
/// `kernel[half_len]` is the `t = 0` tap; the kernel is symmetric about it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerResponse {
    pub center_frequency: f64,
    pub fractional_bandwidth: f64,
    pub sampling_rate: f64,
    pub sigma_t: f64,
    pub kernel: Vec<f64>,
}

impl TransducerResponse {
    pub fn half_len(&self) -> usize {
        self.kernel.len() / 2
    }
}

/// Envelope width for a Gaussian pulse whose amplitude spectrum has full
/// width at half maximum `bandwidth_hz`.
pub fn envelope_sigma(bandwidth_hz: f64) -> f64 {
    (2.0 * std::f64::consts::LN_2).sqrt() / (std::f64::consts::PI * bandwidth_hz)
}

pub fn build_impulse_response(
    center_frequency: f64,
    fractional_bandwidth: f64,
    sampling_rate: f64,
) -> Result<TransducerResponse> {
    if !(sampling_rate > 0.0 && sampling_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate must be positive, got {sampling_rate}"
        )));
    }
    if !(fractional_bandwidth > 0.0 && fractional_bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "fractional bandwidth must be positive, got {fractional_bandwidth}"
        )));
    }
    if !(center_frequency > 0.0 && center_frequency < sampling_rate / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "center frequency {center_frequency} Hz must lie in (0, {}) Hz",
            sampling_rate / 2.0
        )));
    }
    let sigma_t = envelope_sigma(fractional_bandwidth * center_frequency);
    let half = (4.0 * sigma_t * sampling_rate).floor() as usize;
    let kernel = (0..=2 * half)
        .map(|j| {
            let t = (j as f64 - half as f64) / sampling_rate;
            (-t * t / (2.0 * sigma_t * sigma_t)).exp()
                * (2.0 * std::f64::consts::PI * center_frequency * t).cos()
        })
        .collect();
    Ok(TransducerResponse {
        center_frequency,
        fractional_bandwidth,
        sampling_rate,
        sigma_t,
        kernel,
    })
}

/// Detector time series, channel-major `C x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    pub channels: usize,
    pub samples_per_channel: usize,
    pub samples: Vec<f64>,
    pub sampling_rate: f64,
    pub sound_speed: f64,
    pub geometry: ArrayGeometry,
}

impl SignalSet {
    pub fn new(
        samples: Vec<f64>,
        channels: usize,
        sampling_rate: f64,
        sound_speed: f64,
        geometry: ArrayGeometry,
    ) -> Result<Self> {
        if channels == 0 || samples.is_empty() || !samples.len().is_multiple_of(channels) {
            return Err(Error::ShapeMismatch(format!(
                "{} samples do not split into {channels} channels",
                samples.len()
            )));
        }
        if geometry.num_elements != channels {
            return Err(Error::ShapeMismatch(format!(
                "{channels} channels for a {}-element array",
                geometry.num_elements
            )));
        }
        if !(sampling_rate > 0.0 && sound_speed > 0.0) {
            return Err(Error::InvalidParameter(
                "sampling rate and sound speed must be positive".into(),
            ));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite signal sample".into()));
        }
        Ok(SignalSet {
            channels,
            samples_per_channel: samples.len() / channels,
            samples,
            sampling_rate,
            sound_speed,
            geometry,
        })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let t = self.samples_per_channel;
        &self.samples[c * t..(c + 1) * t]
    }

    /// Add zero-mean Gaussian noise with standard deviation `std`.
    pub fn add_noise(&mut self, std: f64, seed: u64) -> Result<()> {
        if std == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidParameter(format!("noise std {std}: {e}")))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for v in &mut self.samples {
            *v += normal.sample(&mut rng);
        }
        Ok(())
    }
}

/// Number of samples needed to record every arrival plus the kernel tail.
pub fn required_samples(
    table: &DelayTable,
    response: &TransducerResponse,
    sampling_rate: f64,
    sound_speed: f64,
) -> usize {
    (table.max_distance() / sound_speed * sampling_rate).ceil() as usize + response.half_len() + 2
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_signals(
    p0: &PressureMap,
    geometry: &ArrayGeometry,
    grid: &ImageGrid,
    table: &DelayTable,
    response: &TransducerResponse,
    sampling_rate: f64,
    sound_speed: f64,
    duration: f64,
) -> Result<SignalSet> {
    if p0.grid != *grid {
        return Err(Error::ShapeMismatch(
            "pressure map grid differs from imaging grid".into(),
        ));
    }
    if table.channels != geometry.num_elements
        || table.height != grid.height
        || table.width != grid.width
    {
        return Err(Error::ShapeMismatch(
            "delay table does not match geometry and grid".into(),
        ));
    }
    if !(sound_speed > 0.0 && sampling_rate > 0.0 && duration > 0.0) {
        return Err(Error::InvalidParameter(
            "sound speed, sampling rate and duration must be positive".into(),
        ));
    }
    if p0.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "non-finite initial pressure".into(),
        ));
    }
    let t_len = (duration * sampling_rate).round() as usize;
    let required = required_samples(table, response, sampling_rate, sound_speed);
    if t_len < required {
        return Err(Error::DurationTooShort {
            required,
            available: t_len,
        });
    }
    let r_min = grid.pixel_pitch();
    let samples_per_meter = sampling_rate / sound_speed;
    let half = response.half_len() as isize;
    let kernel = &response.kernel;

    let mut samples = vec![0.0; geometry.num_elements * t_len];
    samples
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(c, trace)| {
            let mut impulses = vec![0.0; t_len];
            for (&r, &p) in table.channel(c).iter().zip(&p0.values) {
                if p == 0.0 {
                    continue;
                }
                let amp = p / r.max(r_min).sqrt();
                let tau = r * samples_per_meter;
                let n0 = tau.floor() as usize;
                let frac = tau - n0 as f64;
                impulses[n0] += amp * (1.0 - frac);
                impulses[n0 + 1] += amp * frac;
            }
            for (n, &imp) in impulses.iter().enumerate() {
                if imp == 0.0 {
                    continue;
                }
                let lo = (n as isize - half).max(0) as usize;
                let hi = ((n as isize + half) as usize).min(t_len - 1);
                for (out, &k) in trace[lo..=hi]
                    .iter_mut()
                    .zip(&kernel[(lo as isize - n as isize + half) as usize..])
                {
                    *out += imp * k;
                }
            }
        });
    SignalSet::new(
        samples,
        geometry.num_elements,
        sampling_rate,
        sound_speed,
        *geometry,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_delay_table;

    fn dft_magnitude(x: &[f64], freq: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &v) in x.iter().enumerate() {
            let ph = -2.0 * std::f64::consts::PI * freq * n as f64 / fs;
            re += v * ph.cos();
            im += v * ph.sin();
        }
        re.hypot(im)
    }

    #[test]
    fn sigma_for_default_transducer() {
        let r = build_impulse_response(2.5e6, 1.1, 40e6).unwrap();
        // sqrt(2 ln 2) / (pi * 2.75e6)
        let oracle = (2.0f64 * 2f64.ln()).sqrt() / (std::f64::consts::PI * 2.75e6);
        assert!((r.sigma_t - oracle).abs() < 1e-20);
        assert!((r.sigma_t - 1.3626e-7).abs() < 1e-10);
        assert_eq!(r.kernel[r.half_len()], 1.0);
        let n = r.kernel.len();
        for j in 0..n {
            assert_eq!(r.kernel[j], r.kernel[n - 1 - j]);
        }
    }

    #[test]
    fn half_amplitude_bandwidth() {
        let fs = 40e6;
        let r = build_impulse_response(2.5e6, 1.1, fs).unwrap();
        // Scan the amplitude spectrum on a fine frequency grid.
        let step = 5e3;
        let freqs: Vec<f64> = (0..=2000).map(|i| i as f64 * step).collect();
        let mags: Vec<f64> = freqs
            .iter()
            .map(|&f| dft_magnitude(&r.kernel, f, fs))
            .collect();
        let peak = mags.iter().copied().fold(0.0, f64::max);
        let above: Vec<f64> = freqs
            .iter()
            .zip(&mags)
            .filter(|(_, &m)| m >= peak / 2.0)
            .map(|(&f, _)| f)
            .collect();
        let width = above.last().unwrap() - above.first().unwrap();
        assert!(((width - 2.75e6) / 2.75e6).abs() < 0.05, "{width}");
    }

    #[test]
    fn rejects_bad_transducer() {
        assert!(build_impulse_response(25e6, 1.1, 40e6).is_err());
        assert!(build_impulse_response(2.5e6, 0.0, 40e6).is_err());
        assert!(build_impulse_response(2.5e6, 1.1, 0.0).is_err());
    }

    fn setup(side: usize) -> (ArrayGeometry, ImageGrid, DelayTable, TransducerResponse) {
        let g = ArrayGeometry::full_ring(128, 0.018).unwrap();
        let grid = ImageGrid::square(side, 0.026).unwrap();
        let t = build_delay_table(&g, &grid);
        let r = build_impulse_response(2.5e6, 1.1, 40e6).unwrap();
        (g, grid, t, r)
    }

    #[test]
    fn center_point_arrives_on_time() {
        // Odd grid so a pixel sits exactly at the ring center.
        let (g, grid, t, r) = setup(33);
        let mut p0 = PressureMap::zeros(grid);
        p0.values[16 * 33 + 16] = 1.0;
        let s = simulate_signals(&p0, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
        let expected = (0.018f64 / 1480.0 * 40e6).round() as isize;
        let first = s.channel(0).to_vec();
        for c in 0..128 {
            let trace = s.channel(c);
            let peak = trace
                .iter()
                .enumerate()
                .fold(
                    (0, f64::MIN),
                    |a, (i, &v)| if v.abs() > a.1 { (i, v.abs()) } else { a },
                )
                .0 as isize;
            assert!(
                (peak - expected).abs() <= 1,
                "channel {c}: {peak} vs {expected}"
            );
            for (a, b) in trace.iter().zip(&first) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn zero_and_superposition() {
        let (g, grid, t, r) = setup(16);
        let zero = simulate_signals(
            &PressureMap::zeros(grid),
            &g,
            &grid,
            &t,
            &r,
            40e6,
            1480.0,
            30e-6,
        )
        .unwrap();
        assert!(zero.samples.iter().all(|&v| v == 0.0));

        let a = crate::phantom::gen_discs(&grid, 1, 2).unwrap();
        let b = crate::phantom::gen_discs(&grid, 2, 2).unwrap();
        let sum = PressureMap {
            grid,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(),
        };
        let sa = simulate_signals(&a, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
        let sb = simulate_signals(&b, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
        let ss = simulate_signals(&sum, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
        let scale = ss.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..ss.samples.len() {
            assert!((ss.samples[i] - sa.samples[i] - sb.samples[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn radial_shift_moves_peak() {
        // Element 0 sits at angle pi/128 on the ring; move a point source
        // toward it along the grid and compare arrival shifts with r/c*fs.
        let (g, grid, t, r) = setup(65);
        let shifts = [0usize, 4, 8];
        for &dw in &shifts {
            let mut p0 = PressureMap::zeros(grid);
            p0.values[32 * 65 + 32 + dw] = 1.0;
            let s = simulate_signals(&p0, &g, &grid, &t, &r, 40e6, 1480.0, 30e-6).unwrap();
            let trace = s.channel(0);
            let peak = trace
                .iter()
                .enumerate()
                .fold(
                    (0, 0.0f64),
                    |a, (i, &v)| if v.abs() > a.1 { (i, v.abs()) } else { a },
                )
                .0 as f64;
            let want = t.get(0, 32, 32 + dw) / 1480.0 * 40e6;
            assert!((peak - want).abs() <= 1.0, "{peak} vs {want}");
        }
    }

    #[test]
    fn short_duration_names_sample_count() {
        let (g, grid, t, r) = setup(8);
        let p0 = PressureMap::zeros(grid);
        let err = simulate_signals(&p0, &g, &grid, &t, &r, 40e6, 1480.0, 1e-6).unwrap_err();
        match err {
            Error::DurationTooShort {
                required,
                available,
            } => {
                assert_eq!(available, 40);
                assert_eq!(required, required_samples(&t, &r, 40e6, 1480.0));
            }
            other => panic!("{other}"),
        }
    }
}
