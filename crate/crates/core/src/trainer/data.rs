//! Training samples derived from stored phantoms.
//!
//! Each phantom is simulated on the full ring and delayed onto the grid
//! channel by channel. The first `input_channels` channels form the
//! quarter-view input, the remaining ones the supervision target. Every
//! sample is scaled so its full-view DAS image has peak magnitude 1.

use rayon::prelude::*;

use crate::acquisition::Acquisition;
use crate::das::{superpose, DasImage, PositionWiseStack};
use crate::error::{Error, Result};
use crate::io::container::{read_kind, Kind};
use crate::phantom::{sample_seed, Manifest, PressureMap, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub p0: PressureMap,
    pub x: PositionWiseStack,
    pub target: PositionWiseStack,
    pub y: DasImage,
    pub x_image: DasImage,
}

pub fn prepare_sample(
    acq: &Acquisition,
    p0: PressureMap,
    input_channels: usize,
    noise_seed: u64,
) -> Result<Sample> {
    let total = acq.geometry.num_elements;
    if input_channels == 0 || input_channels >= total {
        return Err(Error::InvalidParameter(format!(
            "input_channels must lie in [1, {total}), got {input_channels}"
        )));
    }
    let signals = acq.simulate(&p0, noise_seed)?;
    let mut x = acq.position_wise(&signals, 0, input_channels)?;
    let mut target = acq.position_wise(&signals, input_channels, total - input_channels)?;
    let mut y = superpose(&x);
    for (v, t) in y.values.iter_mut().zip(superpose(&target).values) {
        *v += t;
    }
    let peak = y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Dataset(
            "phantom produces an all-zero full-view image".into(),
        ));
    }
    let scale = 1.0 / peak;
    x.scale(scale);
    target.scale(scale);
    y.values.iter_mut().for_each(|v| *v *= scale);
    y.provenance = (0..total).collect();
    let x_image = superpose(&x);
    Ok(Sample {
        p0,
        x,
        target,
        y,
        x_image,
    })
}

pub fn load_phantom(path: &std::path::Path, acq: &Acquisition) -> Result<PressureMap> {
    let (header, values) = read_kind(path, Kind::Image)?;
    let grid = header.grid()?;
    if grid.height != acq.grid.height || grid.width != acq.grid.width {
        return Err(Error::Dataset(format!(
            "{}: phantom is {}x{}, configured grid is {}x{}",
            path.display(),
            grid.height,
            grid.width,
            acq.grid.height,
            acq.grid.width
        )));
    }
    Ok(PressureMap {
        grid: acq.grid,
        values,
    })
}

/// All samples of one split, in manifest order.
pub fn load_split(
    manifest: &Manifest,
    split: Split,
    acq: &Acquisition,
    input_channels: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let files: Vec<_> = manifest.files(split).collect();
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "manifest in {} has no {} entries",
            manifest.root.display(),
            split.as_str()
        )));
    }
    files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            if !path.exists() {
                return Err(Error::Dataset(format!(
                    "missing dataset entry {}",
                    path.display()
                )));
            }
            let p0 = load_phantom(path, acq)?;
            prepare_sample(
                acq,
                p0,
                input_channels,
                sample_seed(seed, i as u64) ^ 0x5EED,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::Settings;
    use crate::phantom::{gen_dataset, gen_discs, PhantomKind};

    fn small() -> Settings {
        Settings {
            grid: 16,
            num_elements: 16,
            input_channels: 4,
            ..Settings::default()
        }
    }

    #[test]
    fn sample_parts_are_consistent() {
        let acq = Acquisition::from_settings(&small()).unwrap();
        let p0 = gen_discs(&acq.grid, 3, 2).unwrap();
        let s = prepare_sample(&acq, p0, 4, 0).unwrap();
        assert_eq!(s.x.channel_ids, vec![0, 1, 2, 3]);
        assert_eq!(s.target.channel_ids, (4..16).collect::<Vec<_>>());
        let peak = s.y.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
        let recombined: Vec<f64> = superpose(&s.x)
            .values
            .iter()
            .zip(superpose(&s.target).values)
            .map(|(a, b)| a + b)
            .collect();
        for (a, b) in recombined.iter().zip(&s.y.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_phantom_rejected() {
        let acq = Acquisition::from_settings(&small()).unwrap();
        let p0 = PressureMap::zeros(acq.grid);
        assert!(matches!(
            prepare_sample(&acq, p0, 4, 0),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn split_loading_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let acq = Acquisition::from_settings(&small()).unwrap();
        let m = gen_dataset(PhantomKind::Discs, &acq.grid, 1, 3, 1, dir.path()).unwrap();
        let train = load_split(&m, Split::Train, &acq, 4, 0).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(load_split(&m, Split::Test, &acq, 4, 0).unwrap().len(), 1);
        std::fs::remove_file(dir.path().join("train_00001.pwd")).unwrap();
        let err = load_split(&m, Split::Train, &acq, 4, 0).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }
}
