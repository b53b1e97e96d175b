//! Procedural amplitude- and phase-dominant phantoms and train/test datasets.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{Context, SystemConfig};
use crate::error::{FpmError, Result};
use crate::field::ComplexField;
use crate::io::{read_stack, write_atomic, write_stack, StackData};
use crate::metrics::{band_mask, filter_complex};
use crate::optics::to_array;

const NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub field: ComplexField,
    /// Absorption, `|field| = exp(-mu)`.
    pub mu: Array2<f64>,
    /// Phase in radians.
    pub phi: Array2<f64>,
    pub context: Context,
}

impl Phantom {
    pub fn from_parts(mu: Array2<f64>, phi: Array2<f64>, pitch_um: f64, context: Context) -> Self {
        let field = ComplexField::from_absorption_phase(&mu, &phi, pitch_um);
        Phantom {
            field,
            mu,
            phi,
            context,
        }
    }
}

/// Low-pass `img` to the reconstruction disk `|u| <= NA_recon / lambda`.
pub fn band_limit(img: &Array2<f64>, cfg: &SystemConfig) -> Array2<f64> {
    let q = img.nrows();
    let mask = band_mask(q, cfg.freq_step(), cfg.wavelength_um, 0.0, cfg.na_recon());
    let data: Vec<Complex64> = img.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    to_array(filter_complex(&data, q, &mask).into_iter().map(|v| v.re).collect(), q)
}

fn normalize_unit(img: &mut Array2<f64>) {
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        img.mapv_inplace(|v| (v - lo) / span);
    } else {
        img.fill(0.0);
    }
}

/// Periodic signed distance on a ring of `n` pixels.
fn wrap_delta(a: f64, b: f64, n: f64) -> f64 {
    let d = (a - b).rem_euclid(n);
    if d > n / 2.0 {
        d - n
    } else {
        d
    }
}

/// Seeded blobs plus noise, band-limited and scaled to `[0, 1]`.
pub fn structure(cfg: &SystemConfig, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let q = cfg.hires_px();
    let nf = q as f64;
    let mut img = Array2::<f64>::zeros((q, q));
    let count = rng.random_range(5..=15);
    for _ in 0..count {
        let cx = rng.random::<f64>() * nf;
        let cy = rng.random::<f64>() * nf;
        let major = rng.random_range(1.5..(nf / 8.0).max(2.0));
        let minor = major / rng.random_range(1.0..3.0);
        let theta = rng.random::<f64>() * PI;
        let amp = rng.random_range(0.5..1.0);
        let (s, c) = theta.sin_cos();
        for ((iy, ix), v) in img.indexed_iter_mut() {
            let dx = wrap_delta(ix as f64, cx, nf);
            let dy = wrap_delta(iy as f64, cy, nf);
            let u = (c * dx + s * dy) / major;
            let w = (-s * dx + c * dy) / minor;
            *v += amp * (-0.5 * (u * u + w * w)).exp();
        }
    }
    for v in img.iter_mut() {
        *v += NOISE_STD * rng.sample::<f64, _>(StandardNormal);
    }
    // filtering before scaling keeps both the band limit and the [0, 1] range
    let mut out = band_limit(&img, cfg);
    normalize_unit(&mut out);
    out
}

pub fn generate_phantom(cfg: &SystemConfig, context: Context, seed: u64) -> Phantom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primary = structure(cfg, &mut rng);
    let secondary = structure(cfg, &mut rng);
    let (mu, phi) = if context.is_amplitude() {
        (primary.mapv(|s| 0.8 * s), secondary.mapv(|s| 0.1 * s))
    } else {
        (secondary.mapv(|s| 0.05 * s), primary.mapv(|s| PI / 3.0 * s))
    };
    Phantom::from_parts(mu, phi, cfg.hires_pitch_um(), context)
}

/// Centered soft-edged disk, band-limited: a pure-amplitude or pure-phase test object.
pub fn disk_phantom(cfg: &SystemConfig, radius_px: f64, amplitude: bool) -> Phantom {
    let q = cfg.hires_px();
    let c = (q as f64 - 1.0) / 2.0;
    let disk = Array2::from_shape_fn((q, q), |(i, j)| {
        let r = (i as f64 - c).hypot(j as f64 - c);
        0.5 * (1.0 - ((r - radius_px) / 1.5).tanh())
    });
    let mut s = band_limit(&disk, cfg);
    normalize_unit(&mut s);
    let zero = Array2::zeros((q, q));
    let (mu, phi, context) = if amplitude {
        (s.mapv(|v| 0.5 * v), zero, Context::Amplitude)
    } else {
        (zero, s.mapv(|v| PI / 3.0 * v), Context::Phase)
    };
    Phantom::from_parts(mu, phi, cfg.hires_pitch_um(), context)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub phantoms: Vec<Phantom>,
    pub manifest: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.index)
            .collect()
    }

    pub fn split(&self, split: Split) -> Vec<&Phantom> {
        self.indices(split).into_iter().map(|i| &self.phantoms[i]).collect()
    }

    pub fn manifest_csv(&self) -> String {
        let mut s = String::from("index,seed,split\n");
        for e in &self.manifest {
            let _ = writeln!(s, "{},{},{}", e.index, e.seed, e.split.as_str());
        }
        s
    }

    /// Writes `fields.fpmstack` and `manifest.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let fields = self.phantoms.iter().map(|p| p.field.data.clone()).collect();
        write_stack(&dir.join("fields.fpmstack"), &StackData::Complex(fields))?;
        write_atomic(&dir.join("manifest.csv"), self.manifest_csv().as_bytes())
    }

    pub fn load(dir: &Path, cfg: &SystemConfig, context: Context) -> Result<Self> {
        let fields = match read_stack(&dir.join("fields.fpmstack"))? {
            StackData::Complex(f) => f,
            StackData::Real(_) => return Err(FpmError::Format("dataset fields must be complex".into())),
        };
        let path = dir.join("manifest.csv");
        let manifest = parse_manifest(&std::fs::read_to_string(&path)?, &path)?;
        if manifest.len() != fields.len() {
            return Err(FpmError::Format(format!(
                "manifest lists {} phantoms, stack holds {}",
                manifest.len(),
                fields.len()
            )));
        }
        let phantoms = fields
            .into_iter()
            .map(|f| {
                let mu = f.mapv(|v| -v.norm().ln());
                let phi = f.mapv(|v| v.arg());
                Phantom::from_parts(mu, phi, cfg.hires_pitch_um(), context)
            })
            .collect();
        Ok(Dataset { phantoms, manifest })
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestEntry>> {
    let err = |line: usize, msg: String| FpmError::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 {
            if line != "index,seed,split" {
                return Err(err(1, format!("bad header `{line}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(err(i + 1, "expected 3 fields".into()));
        }
        let index = parts[0].parse().map_err(|e| err(i + 1, format!("index: {e}")))?;
        let seed = parts[1].parse().map_err(|e| err(i + 1, format!("seed: {e}")))?;
        let split = match parts[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            s => return Err(err(i + 1, format!("unknown split `{s}`"))),
        };
        if index != out.len() {
            return Err(err(i + 1, format!("index {index} out of order")));
        }
        out.push(ManifestEntry { index, seed, split });
    }
    Ok(out)
}

/// Number of training phantoms for `n` total: 90% rounded, at least one of each split.
pub fn train_count(n: usize) -> usize {
    ((0.9 * n as f64).round() as usize).clamp(1, n - 1)
}

pub fn make_dataset(cfg: &SystemConfig, context: Context, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(FpmError::Config(format!("dataset needs at least 2 phantoms, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = train_count(n);
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    let manifest = (0..n)
        .map(|i| ManifestEntry {
            index: i,
            seed: seeds[i],
            split: split[i],
        })
        .collect();
    let phantoms = seeds.iter().map(|s| generate_phantom(cfg, context, *s)).collect();
    Ok(Dataset { phantoms, manifest })
}
