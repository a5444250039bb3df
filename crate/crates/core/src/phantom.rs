//! Seeded synthetic initial-pressure maps.
//!
//! The generators stand in for a vessel-image dataset: filled discs and
//! random-walk tube trees. Every generator is a pure function of its grid,
//! seed and shape parameters; randomness comes from [`crate::seeded_rng`].

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::io::container::{write_container, ContainerHeader, Kind};
use crate::seeded_rng;

/// Optical and thermal properties that produce the initial pressure.
#[derive(Debug, Clone)]
pub struct PhantomSpec {
    pub gruneisen: f64,
    pub conversion_efficiency: f64,
    /// Absorption coefficient per pixel, row-major over `grid`.
    pub absorption: Vec<f64>,
    pub fluence: f64,
    pub grid: ImageGrid,
}

/// Initial pressure `p0` on an image grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureMap {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
}

impl PressureMap {
    pub fn zeros(grid: ImageGrid) -> Self {
        PressureMap {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn get(&self, h: usize, w: usize) -> f64 {
        self.values[h * self.grid.width + w]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Boolean support `p0 > 0`.
    pub fn support(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.0).collect()
    }
}

/// `p0 = gruneisen * conversion_efficiency * absorption * fluence`, pointwise.
pub fn make_initial_pressure(spec: &PhantomSpec) -> Result<PressureMap> {
    let scalars = [spec.gruneisen, spec.conversion_efficiency, spec.fluence];
    if scalars.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("non-finite phantom scalar".into()));
    }
    if scalars.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidParameter(
            "gruneisen, conversion efficiency and fluence must be positive".into(),
        ));
    }
    if spec.absorption.len() != spec.grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "absorption has {} values for a {}x{} grid",
            spec.absorption.len(),
            spec.grid.height,
            spec.grid.width
        )));
    }
    if spec.absorption.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidParameter(
            "absorption must be finite and non-negative".into(),
        ));
    }
    let scale = spec.gruneisen * spec.conversion_efficiency * spec.fluence;
    Ok(PressureMap {
        grid: spec.grid,
        values: spec.absorption.iter().map(|a| scale * a).collect(),
    })
}

/// A filled disc in physical coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Disc {
    pub center: (f64, f64),
    pub radius: f64,
    pub amplitude: f64,
}

/// Rasterize discs onto the grid; overlapping discs keep the larger amplitude.
pub fn render_discs(grid: &ImageGrid, discs: &[Disc]) -> PressureMap {
    let mut map = PressureMap::zeros(*grid);
    for h in 0..grid.height {
        for w in 0..grid.width {
            let (x, y) = grid.pixel_center(h, w);
            let v = &mut map.values[h * grid.width + w];
            for d in discs {
                if (x - d.center.0).hypot(y - d.center.1) <= d.radius {
                    *v = v.max(d.amplitude);
                }
            }
        }
    }
    map
}

pub fn gen_discs(grid: &ImageGrid, seed: u64, count: usize) -> Result<PressureMap> {
    if count == 0 {
        return Err(Error::InvalidParameter("disc count must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let pitch = grid.pixel_pitch();
    let half_w = grid.extent / 2.0;
    let half_h = grid.height as f64 * pitch / 2.0;
    let r_max = (grid.extent / 6.0).max(pitch);
    let r_min = pitch.min(r_max);
    let discs: Vec<Disc> = (0..count)
        .map(|_| {
            let radius = rng.random_range(r_min..=r_max);
            // keep centers in the central 70% so most discs sit inside the ring
            let cx = rng.random_range(-0.7..=0.7) * half_w;
            let cy = rng.random_range(-0.7..=0.7) * half_h;
            // (0, 1]
            let amplitude = 1.0 - rng.random::<f64>();
            Disc {
                center: (cx, cy),
                radius,
                amplitude: amplitude.max(0.05),
            }
        })
        .collect();
    let map = render_discs(grid, &discs);
    debug_assert!(map.values.iter().any(|&v| v > 0.0));
    Ok(map)
}

/// Random-walk tube trees. Each branch after the first starts on a point of
/// an existing branch, so the structure is connected.
pub fn gen_vessels(grid: &ImageGrid, seed: u64, branches: usize) -> Result<PressureMap> {
    if branches == 0 {
        return Err(Error::InvalidParameter("branch count must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let (hf, wf) = (grid.height as f64, grid.width as f64);
    let side = hf.min(wf);
    let mut map = PressureMap::zeros(*grid);
    // Walk in pixel units; (row, col) as floats.
    let mut trunk: Vec<(f64, f64)> = Vec::new();
    for b in 0..branches {
        let (mut r, mut c) = if b == 0 || trunk.is_empty() {
            (
                rng.random_range(0.25..0.75) * hf,
                rng.random_range(0.25..0.75) * wf,
            )
        } else {
            trunk[rng.random_range(0..trunk.len())]
        };
        let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let half_width: f64 = rng.random_range(0.5..=1.5);
        let amplitude: f64 = rng.random_range(0.5..=1.0);
        let steps = rng.random_range((side * 0.5) as usize..=(side * 0.8) as usize + 1);
        for _ in 0..steps {
            stamp(&mut map, r, c, half_width, amplitude);
            trunk.push((r, c));
            heading += rng.random_range(-0.35..0.35);
            let (nr, nc) = (r + heading.sin(), c + heading.cos());
            if nr < 0.0 || nc < 0.0 || nr >= hf || nc >= wf {
                // Turn back at the border so every branch keeps its length.
                heading += std::f64::consts::PI;
                continue;
            }
            r = nr;
            c = nc;
        }
    }
    Ok(map)
}

fn stamp(map: &mut PressureMap, r: f64, c: f64, half_width: f64, amplitude: f64) {
    let g = map.grid;
    let reach = half_width.ceil() as isize + 1;
    let (ri, ci) = (r.floor() as isize, c.floor() as isize);
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (h, w) = (ri + dr, ci + dc);
            if h < 0 || w < 0 || h >= g.height as isize || w >= g.width as isize {
                continue;
            }
            let (ph, pw) = (h as f64 + 0.5, w as f64 + 0.5);
            if (ph - r).hypot(pw - c) <= half_width {
                let v = &mut map.values[h as usize * g.width + w as usize];
                *v = v.max(amplitude);
            }
        }
    }
    // Thin tubes can miss every pixel center; always mark the walk's own pixel.
    if ri >= 0 && ci >= 0 && (ri as usize) < g.height && (ci as usize) < g.width {
        let v = &mut map.values[ri as usize * g.width + ci as usize];
        *v = v.max(amplitude);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Discs,
    Vessels,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discs" => Ok(PhantomKind::Discs),
            "vessels" => Ok(PhantomKind::Vessels),
            other => Err(Error::InvalidParameter(format!(
                "unknown phantom kind {other:?} (expected discs or vessels)"
            ))),
        }
    }
}

/// Per-sample seed; distinct for every index under one base seed.
pub fn sample_seed(base: u64, index: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index)
}

/// Draw one phantom of `kind` with a seed-chosen object count.
pub fn gen_phantom(kind: PhantomKind, grid: &ImageGrid, seed: u64) -> Result<PressureMap> {
    let mut rng = seeded_rng(seed ^ 0xD1B5_4A32_D192_ED03);
    match kind {
        PhantomKind::Discs => gen_discs(grid, seed, rng.random_range(1..=3)),
        PhantomKind::Vessels => gen_vessels(grid, seed, rng.random_range(1..=4)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<(Split, String)>,
}

impl Manifest {
    pub fn files(&self, split: Split) -> impl Iterator<Item = PathBuf> + '_ {
        self.entries
            .iter()
            .filter(move |(s, _)| *s == split)
            .map(|(_, f)| self.root.join(f))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (split, file) = line.split_once('\t').ok_or_else(|| Error::Format {
                path: path.into(),
                message: format!("line {}: expected split<TAB>filename", i + 1),
            })?;
            let split = match split {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::Format {
                        path: path.into(),
                        message: format!("line {}: unknown split {other:?}", i + 1),
                    })
                }
            };
            entries.push((split, file.to_string()));
        }
        Ok(Manifest {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }
}

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Write `n_train + n_test` phantom containers and a `manifest.txt` to
/// `out_dir`.
pub fn gen_dataset(
    kind: PhantomKind,
    grid: &ImageGrid,
    seed: u64,
    n_train: usize,
    n_test: usize,
    out_dir: &Path,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n_train + n_test);
    let splits =
        std::iter::repeat_n(Split::Train, n_train).chain(std::iter::repeat_n(Split::Test, n_test));
    let mut manifest_text = String::new();
    for (index, split) in splits.enumerate() {
        let map = gen_phantom(kind, grid, sample_seed(seed, index as u64))?;
        let name = format!("{}_{:05}.pwd", split.as_str(), index);
        let header = ContainerHeader::image(Kind::Image, grid);
        write_container(&out_dir.join(&name), &header, &map.values)?;
        manifest_text.push_str(split.as_str());
        manifest_text.push('\t');
        manifest_text.push_str(&name);
        manifest_text.push('\n');
        entries.push((split, name));
    }
    let manifest_path = out_dir.join(MANIFEST_NAME);
    std::fs::write(&manifest_path, manifest_text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(Manifest {
        root: out_dir.to_path_buf(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> ImageGrid {
        ImageGrid::square(n, 0.026).unwrap()
    }

    fn spec(g: f64, eta: f64, f: f64, absorption: Vec<f64>, grid: ImageGrid) -> PhantomSpec {
        PhantomSpec {
            gruneisen: g,
            conversion_efficiency: eta,
            absorption,
            fluence: f,
            grid,
        }
    }

    #[test]
    fn unit_scalars_pass_absorption_through() {
        let mask = vec![0.0, 1.0, 1.0, 0.0];
        let p = make_initial_pressure(&spec(1.0, 1.0, 1.0, mask.clone(), grid(2))).unwrap();
        assert_eq!(p.values, mask);
    }

    #[test]
    fn scalar_product() {
        let mut mu = vec![0.0; 9];
        mu[4] = 1.0;
        let p = make_initial_pressure(&spec(0.2, 1.0, 5.0, mu, grid(3))).unwrap();
        for (i, v) in p.values.iter().enumerate() {
            let want = if i == 4 { 0.2 * 1.0 * 5.0 } else { 0.0 };
            assert_eq!(*v, want);
        }
        assert!((p.values[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_absorption_and_linearity() {
        let p = make_initial_pressure(&spec(0.3, 0.7, 2.0, vec![0.0; 4], grid(2))).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        let mu = vec![0.1, 0.5, 0.25, 1.0];
        let a = make_initial_pressure(&spec(0.3, 0.5, 2.0, mu.clone(), grid(2))).unwrap();
        let b = make_initial_pressure(&spec(0.6, 0.5, 2.0, mu.clone(), grid(2))).unwrap();
        let c = make_initial_pressure(&spec(0.3, 0.5, 4.0, mu, grid(2))).unwrap();
        for i in 0..4 {
            assert_eq!(b.values[i], 2.0 * a.values[i]);
            assert_eq!(c.values[i], 2.0 * a.values[i]);
        }
    }

    #[test]
    fn rejects_bad_scalars() {
        assert!(make_initial_pressure(&spec(f64::NAN, 1.0, 1.0, vec![1.0], grid(1))).is_err());
        assert!(make_initial_pressure(&spec(1.0, 0.0, 1.0, vec![1.0], grid(1))).is_err());
        assert!(make_initial_pressure(&spec(1.0, 1.0, 1.0, vec![-1.0], grid(1))).is_err());
        assert!(make_initial_pressure(&spec(1.0, 1.0, 1.0, vec![1.0; 3], grid(1))).is_err());
    }

    #[test]
    fn discs_are_deterministic_and_nonempty() {
        let g = grid(32);
        assert_eq!(gen_discs(&g, 11, 3).unwrap(), gen_discs(&g, 11, 3).unwrap());
        assert_ne!(gen_discs(&g, 11, 3).unwrap(), gen_discs(&g, 12, 3).unwrap());
        for seed in 0..100 {
            let m = gen_discs(&g, seed, 1 + (seed as usize % 4)).unwrap();
            assert!(m.values.iter().any(|&v| v > 0.0), "seed {seed}");
            assert!(m.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(gen_discs(&g, 0, 0).is_err());
    }

    #[test]
    fn forced_disc_peaks_at_center() {
        let g = grid(33);
        let (cx, cy) = g.pixel_center(10, 20);
        let m = render_discs(
            &g,
            &[Disc {
                center: (cx, cy),
                radius: 2.5 * g.pixel_pitch(),
                amplitude: 0.8,
            }],
        );
        let argmax = m
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
            .0;
        // first maximum in row-major order is the top of the disc; the center
        // itself must be at the peak value
        assert_eq!(m.get(10, 20), 0.8);
        assert_eq!(m.values[argmax], 0.8);
    }

    #[test]
    fn vessel_fill_fraction() {
        let g = grid(64);
        assert!(gen_vessels(&g, 1, 0).is_err());
        assert_eq!(
            gen_vessels(&g, 3, 2).unwrap(),
            gen_vessels(&g, 3, 2).unwrap()
        );
        for seed in 0..50 {
            for branches in 1..=5 {
                let m = gen_vessels(&g, seed, branches).unwrap();
                let frac =
                    m.values.iter().filter(|&&v| v > 0.0).count() as f64 / m.values.len() as f64;
                assert!(
                    frac > 0.005 && frac < 0.30,
                    "seed {seed} b {branches}: {frac}"
                );
                assert!(m.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid(32);
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let m = gen_dataset(PhantomKind::Discs, &g, 7, 5, 2, &a).unwrap();
        gen_dataset(PhantomKind::Discs, &g, 7, 5, 2, &b).unwrap();
        assert_eq!(m.files(Split::Train).count(), 5);
        assert_eq!(m.files(Split::Test).count(), 2);
        let pwd: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "pwd"))
            .collect();
        assert_eq!(pwd.len(), 7);
        for entry in std::fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap()
            );
        }
        let back = Manifest::read(&a.join(MANIFEST_NAME)).unwrap();
        assert_eq!(back.entries, m.entries);
        let train: Vec<_> = back.files(Split::Train).collect();
        assert!(back.files(Split::Test).all(|f| !train.contains(&f)));
    }
}
