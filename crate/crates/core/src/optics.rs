//! LED-array geometry, the per-LED sub-aperture operators and measurement
//! simulation.
//!
//! The operator for LED `l` takes the unitary DFT of the `q x q` sample,
//! keeps the `p x p` window of frequencies seen through the pupil when the
//! spectrum is translated by the illumination frequency, masks it with the
//! binary pupil and returns to real space with a unitary `p x p` inverse DFT.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::SystemConfig;
use crate::error::{FpmError, Result};
use crate::fft::{freq_pos, signed_freq, Fft2};
use crate::field::ComplexField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    BrightField,
    DarkField,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::BrightField => "bright",
            Region::DarkField => "dark",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Led {
    /// `(m, n)`: column (x) and row (y) offsets on the LED grid.
    pub grid_index: (i32, i32),
    pub position_mm: (f64, f64),
    /// Illumination spatial frequency `(xi_x, xi_y)` in cycles/um.
    pub xi_cyc_per_um: (f64, f64),
    pub na_illum: f64,
    pub region: Region,
}

impl Led {
    pub fn is_bright(&self) -> bool {
        self.region == Region::BrightField
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedGeometry {
    /// Ordered by grid row `n`, then column `m`.
    pub leds: Vec<Led>,
    pub bright_count: usize,
    pub dark_count: usize,
}

impl LedGeometry {
    pub fn len(&self) -> usize {
        self.leds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leds.is_empty()
    }

    pub fn bright_mask(&self) -> Vec<bool> {
        self.leds.iter().map(Led::is_bright).collect()
    }

    /// Index of the LED at grid position `(m, n)`.
    pub fn index_of(&self, grid_index: (i32, i32)) -> Option<usize> {
        self.leds.iter().position(|l| l.grid_index == grid_index)
    }

    /// For every LED, the index of its point reflection `(-m, -n)`, if present.
    pub fn mirror_indices(&self) -> Vec<Option<usize>> {
        self.leds
            .iter()
            .map(|l| self.index_of((-l.grid_index.0, -l.grid_index.1)))
            .collect()
    }

    pub fn max_na_illum(&self) -> f64 {
        self.leds.iter().map(|l| l.na_illum).fold(0.0, f64::max)
    }

    /// 64-bit FNV-1a digest of the LED grid, illumination frequencies and grid sizes.
    pub fn fingerprint(&self, cfg: &SystemConfig) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(cfg.patch_px as u64).to_le_bytes());
        eat(&(cfg.hires_px() as u64).to_le_bytes());
        eat(&cfg.freq_step().to_bits().to_le_bytes());
        for led in &self.leds {
            eat(&led.grid_index.0.to_le_bytes());
            eat(&led.grid_index.1.to_le_bytes());
            eat(&led.xi_cyc_per_um.0.to_bits().to_le_bytes());
            eat(&led.xi_cyc_per_um.1.to_bits().to_le_bytes());
        }
        h
    }

    /// One LED per line: `m n xi_x xi_y na region`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.leds {
            s.push_str(&format!(
                "{} {} {:.10} {:.10} {:.10} {}\n",
                l.grid_index.0,
                l.grid_index.1,
                l.xi_cyc_per_um.0,
                l.xi_cyc_per_um.1,
                l.na_illum,
                l.region.as_str()
            ));
        }
        s
    }
}

/// Illumination NA of an LED at radial offset `r` from the optical axis.
pub fn illumination_na(r_mm: f64, height_mm: f64) -> f64 {
    r_mm / (r_mm * r_mm + height_mm * height_mm).sqrt()
}

/// Enumerates every grid LED whose illumination NA does not exceed `na_illum_max`.
pub fn build_led_geometry(cfg: &SystemConfig) -> Result<LedGeometry> {
    cfg.validate()?;
    let h = cfg.led_height_mm;
    let pitch = cfg.led_pitch_mm;
    // na < 1 bounds the radius: r <= h * na / sqrt(1 - na^2)
    let r_max = h * cfg.na_illum_max / (1.0 - cfg.na_illum_max.powi(2)).sqrt();
    let extent = (r_max / pitch).ceil() as i32 + 1;
    let tol = 1e-12;

    let mut leds = Vec::new();
    for n in -extent..=extent {
        for m in -extent..=extent {
            let (x, y) = (m as f64 * pitch, n as f64 * pitch);
            let r = x.hypot(y);
            let na = illumination_na(r, h);
            if na > cfg.na_illum_max + tol {
                continue;
            }
            let dist = (r * r + h * h).sqrt();
            let xi = (x / (dist * cfg.wavelength_um), y / (dist * cfg.wavelength_um));
            let region = if na < cfg.na_obj {
                Region::BrightField
            } else {
                Region::DarkField
            };
            leds.push(Led {
                grid_index: (m, n),
                position_mm: (x, y),
                xi_cyc_per_um: xi,
                na_illum: na,
                region,
            });
        }
    }
    let bright_count = leds.iter().filter(|l| l.is_bright()).count();
    if bright_count == 0 {
        return Err(FpmError::Geometry(
            "no LED falls inside the objective's bright-field cone".into(),
        ));
    }
    let dark_count = leds.len() - bright_count;
    Ok(LedGeometry {
        leds,
        bright_count,
        dark_count,
    })
}

/// Binary pupil on the `p x p` frequency grid (origin at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Pupil {
    pub mask: Array2<f64>,
    pub cutoff_cyc_per_um: f64,
    /// Flat positions and signed `(fy, fx)` frequencies of the passband.
    support: Vec<(usize, (i64, i64))>,
}

impl Pupil {
    pub fn new(cfg: &SystemConfig) -> Self {
        let p = cfg.patch_px;
        let du = cfg.freq_step();
        let cutoff = cfg.pupil_cutoff();
        let mut mask = Array2::zeros((p, p));
        let mut support = Vec::new();
        for iy in 0..p {
            for ix in 0..p {
                let (fy, fx) = (signed_freq(iy, p), signed_freq(ix, p));
                let rho = du * (fx as f64).hypot(fy as f64);
                if rho < cutoff {
                    mask[[iy, ix]] = 1.0;
                    support.push((iy * p + ix, (fy, fx)));
                }
            }
        }
        Pupil {
            mask,
            cutoff_cyc_per_um: cutoff,
            support,
        }
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone)]
struct Window {
    /// Illumination shift in frequency bins, `(sy, sx)`.
    shift: (i64, i64),
    /// High-res flat position for each pupil support bin.
    hires_pos: Vec<usize>,
}

/// The collection of LED operators `A_l` for one geometry and grid size.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    p: usize,
    q: usize,
    pitch_hr: f64,
    pupil: Pupil,
    windows: Vec<Window>,
    bright: Vec<bool>,
    fft_p: Fft2,
    fft_q: Fft2,
}

impl ForwardModel {
    pub fn new(cfg: &SystemConfig, geometry: &LedGeometry) -> Result<Self> {
        Self::with_pupil(cfg, geometry, Pupil::new(cfg))
    }

    pub fn with_pupil(cfg: &SystemConfig, geometry: &LedGeometry, pupil: Pupil) -> Result<Self> {
        let (p, q) = (cfg.patch_px, cfg.hires_px());
        if pupil.mask.dim() != (p, p) {
            return Err(FpmError::Shape(format!(
                "pupil is {:?}, expected {p}x{p}",
                pupil.mask.dim()
            )));
        }
        let du = cfg.freq_step();
        let half_p = (p / 2) as i64;
        let hi_p = p as i64 - half_p - 1;
        let mut windows = Vec::with_capacity(geometry.len());
        for (index, led) in geometry.leds.iter().enumerate() {
            let shift = (
                (led.xi_cyc_per_um.1 / du).round() as i64,
                (led.xi_cyc_per_um.0 / du).round() as i64,
            );
            // the whole p-window, not only the passband, must be representable
            let corners = [-half_p - shift.0, hi_p - shift.0, -half_p - shift.1, hi_p - shift.1];
            if corners.iter().any(|&f| freq_pos(f, q).is_none()) {
                return Err(FpmError::OutOfBand { index, shift, q });
            }
            let hires_pos = pupil
                .support
                .iter()
                .map(|&(_, (fy, fx))| {
                    let py = freq_pos(fy - shift.0, q).expect("checked window");
                    let px = freq_pos(fx - shift.1, q).expect("checked window");
                    py * q + px
                })
                .collect();
            windows.push(Window { shift, hires_pos });
        }
        Ok(ForwardModel {
            p,
            q,
            pitch_hr: cfg.hires_pitch_um(),
            pupil,
            windows,
            bright: geometry.bright_mask(),
            fft_p: Fft2::new(p),
            fft_q: Fft2::new(q),
        })
    }

    pub fn patch_px(&self) -> usize {
        self.p
    }

    pub fn hires_px(&self) -> usize {
        self.q
    }

    pub fn hires_pitch_um(&self) -> f64 {
        self.pitch_hr
    }

    pub fn num_leds(&self) -> usize {
        self.windows.len()
    }

    /// Bright-field flag per LED.
    pub fn bright(&self) -> &[bool] {
        &self.bright
    }

    pub fn pupil(&self) -> &Pupil {
        &self.pupil
    }

    /// Frequency-bin shift `(sy, sx)` applied for LED `l`.
    pub fn shift(&self, l: usize) -> (i64, i64) {
        self.windows[l].shift
    }

    /// Unitary `q x q` spectrum of a flat row-major field.
    pub fn spectrum(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut s = x.to_vec();
        self.fft_q.forward(&mut s);
        s
    }

    /// `A_l x` given the precomputed spectrum of `x`; writes a flat `p x p` field.
    pub fn apply_from_spectrum(&self, spectrum: &[Complex64], l: usize, out: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        for (&(pos, _), &hp) in self.pupil.support.iter().zip(&self.windows[l].hires_pos) {
            out[pos] = spectrum[hp];
        }
        self.fft_p.inverse(out);
    }

    /// Adds the frequency-domain image of `A_l^H v` into `acc` (a `q x q` spectrum).
    /// `v` is overwritten.
    pub fn accumulate_adjoint(&self, v: &mut [Complex64], l: usize, acc: &mut [Complex64]) {
        self.fft_p.forward(v);
        for (&(pos, _), &hp) in self.pupil.support.iter().zip(&self.windows[l].hires_pos) {
            acc[hp] += v[pos];
        }
    }

    /// Returns an accumulated spectrum to real space.
    pub fn finish_adjoint(&self, mut acc: Vec<Complex64>) -> Vec<Complex64> {
        self.fft_q.inverse(&mut acc);
        acc
    }

    fn check_hires(&self, x: &ComplexField) -> Result<()> {
        if x.shape() != (self.q, self.q) {
            return Err(FpmError::Shape(format!(
                "field is {:?}, expected {q}x{q}",
                x.shape(),
                q = self.q
            )));
        }
        Ok(())
    }

    fn led_index(&self, l: usize) -> Result<()> {
        if l >= self.windows.len() {
            return Err(FpmError::Shape(format!(
                "LED index {l} out of range for {} LEDs",
                self.windows.len()
            )));
        }
        Ok(())
    }

    /// `A_l x`: the low-resolution complex field at the camera for LED `l`.
    pub fn forward_field(&self, x: &ComplexField, l: usize) -> Result<ComplexField> {
        self.check_hires(x)?;
        self.led_index(l)?;
        let spec = self.spectrum(flat(&x.data));
        let mut out = vec![Complex64::new(0.0, 0.0); self.p * self.p];
        self.apply_from_spectrum(&spec, l, &mut out);
        Ok(ComplexField::new(
            to_array(out, self.p),
            self.pitch_hr * (self.q / self.p) as f64,
        ))
    }

    /// `A_l^H v`.
    pub fn adjoint_field(&self, v: &ComplexField, l: usize) -> Result<ComplexField> {
        if v.shape() != (self.p, self.p) {
            return Err(FpmError::Shape(format!(
                "field is {:?}, expected {p}x{p}",
                v.shape(),
                p = self.p
            )));
        }
        self.led_index(l)?;
        let mut buf = flat(&v.data).to_vec();
        let mut acc = vec![Complex64::new(0.0, 0.0); self.q * self.q];
        self.accumulate_adjoint(&mut buf, l, &mut acc);
        Ok(ComplexField::new(
            to_array(self.finish_adjoint(acc), self.q),
            self.pitch_hr,
        ))
    }

    /// `|A_l x|^2`.
    pub fn simulate_single_led(&self, x: &ComplexField, l: usize) -> Result<Array2<f64>> {
        Ok(self.forward_field(x, l)?.data.mapv(|v| v.norm_sqr()))
    }

    /// Single-LED intensity images for every LED, sharing one transform of `x`.
    pub fn simulate_all(&self, x: &ComplexField) -> Result<Vec<Array2<f64>>> {
        self.check_hires(x)?;
        let spec = self.spectrum(flat(&x.data));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.p * self.p];
        Ok((0..self.windows.len())
            .map(|l| {
                self.apply_from_spectrum(&spec, l, &mut buf);
                Array2::from_shape_fn((self.p, self.p), |(i, j)| buf[i * self.p + j].norm_sqr())
            })
            .collect())
    }
}

pub(crate) fn flat<T>(a: &Array2<T>) -> &[T] {
    a.as_slice().expect("standard layout array")
}

pub(crate) fn to_array<T>(v: Vec<T>, n: usize) -> Array2<T> {
    Array2::from_shape_vec((n, n), v).expect("square buffer")
}

/// `y_m = sum_l c_l y_l`.
pub fn multiplex(singles: &[Array2<f64>], weights: &[f64]) -> Result<Array2<f64>> {
    if singles.len() != weights.len() {
        return Err(FpmError::Shape(format!(
            "{} single-LED images but {} weights",
            singles.len(),
            weights.len()
        )));
    }
    let dim = singles.first().map(|s| s.dim()).unwrap_or((0, 0));
    let mut out = Array2::zeros(dim);
    for (img, &c) in singles.iter().zip(weights) {
        if img.dim() != dim {
            return Err(FpmError::Shape("single-LED images differ in size".into()));
        }
        if c != 0.0 {
            out.scaled_add(c, img);
        }
    }
    Ok(out)
}

/// A set of `K` intensity measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStack {
    pub images: Vec<Array2<f64>>,
    pub design_id: String,
    pub noisy: bool,
    /// Whether each measurement contains bright-field light.
    pub bright: Vec<bool>,
}

impl MeasurementStack {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Scale `s` such that the mean bright-field pixel times `s` equals `target_counts`.
pub fn shot_noise_scale(images: &[Array2<f64>], bright: &[bool], target_counts: f64) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (img, _) in images.iter().zip(bright).filter(|(_, b)| **b) {
        sum += img.sum();
        count += img.len();
    }
    if count == 0 || !(sum > 0.0) {
        return Err(FpmError::ZeroBrightField);
    }
    Ok(target_counts * count as f64 / sum)
}

/// Replaces each pixel `v` by `Poisson(scale * v) / scale`.
pub fn poisson_resample(img: &Array2<f64>, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    img.mapv(|v| {
        let lambda = scale * v.max(0.0);
        if lambda > 0.0 {
            Poisson::new(lambda).expect("positive finite rate").sample(rng) / scale
        } else {
            0.0
        }
    })
}

/// Random stream for measurement `index` under `seed`.
pub fn measurement_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Applies shot noise with one global scale anchored to the bright-field mean.
pub fn add_shot_noise(stack: &MeasurementStack, cfg: &SystemConfig, seed: u64) -> Result<MeasurementStack> {
    let scale = shot_noise_scale(&stack.images, &stack.bright, cfg.bright_mean_counts)?;
    let images = stack
        .images
        .iter()
        .enumerate()
        .map(|(k, img)| poisson_resample(img, scale, &mut measurement_rng(seed, k)))
        .collect();
    Ok(MeasurementStack {
        images,
        design_id: stack.design_id.clone(),
        noisy: true,
        bright: stack.bright.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_field(n: usize, seed: u64, pitch: f64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::new(
            Array2::from_shape_fn((n, n), |_| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            }),
            pitch,
        )
    }

    fn setup() -> (SystemConfig, LedGeometry, ForwardModel) {
        let cfg = SystemConfig::default();
        let geo = build_led_geometry(&cfg).unwrap();
        let model = ForwardModel::new(&cfg, &geo).unwrap();
        (cfg, geo, model)
    }

    #[test]
    fn default_geometry_counts() {
        let (_, geo, _) = setup();
        assert_eq!(geo.len(), 89);
        assert_eq!(geo.bright_count, 21);
        assert_eq!(geo.dark_count, 68);
        let on_axis = &geo.leds[geo.index_of((0, 0)).unwrap()];
        assert_eq!(on_axis.xi_cyc_per_um, (0.0, 0.0));
        assert_eq!(on_axis.region, Region::BrightField);
        let side = &geo.leds[geo.index_of((1, 0)).unwrap()];
        assert!((side.na_illum - 4.0 / (16.0f64 + 2025.0).sqrt()).abs() < 1e-15);
        assert!((side.na_illum - 0.0885).abs() < 5e-5);
    }

    #[test]
    fn constant_field_on_axis_and_dark_field() {
        let (cfg, geo, model) = setup();
        let x = ComplexField::constant(105, Complex64::new(1.0, 0.0), cfg.hires_pitch_um());
        let centre = geo.index_of((0, 0)).unwrap();
        let z = model.forward_field(&x, centre).unwrap();
        for v in z.data.iter() {
            assert!((v - Complex64::new(3.0, 0.0)).norm() < 1e-12);
        }
        let img = model.simulate_single_led(&x, centre).unwrap();
        assert!(img.iter().all(|v| (v - 9.0).abs() < 1e-11));

        for (l, led) in geo.leds.iter().enumerate() {
            if !led.is_bright() {
                let img = model.simulate_single_led(&x, l).unwrap();
                assert!(img.iter().all(|v| v.abs() < 1e-24));
            }
        }
    }

    #[test]
    fn global_phase_does_not_change_intensity() {
        let (cfg, _, model) = setup();
        let x = random_field(105, 3, cfg.hires_pitch_um());
        let rot = Complex64::from_polar(1.0, 1.234);
        let y = ComplexField::new(x.data.mapv(|v| v * rot), x.pitch_um);
        for l in [0, 10, 44, 88] {
            let a = model.simulate_single_led(&x, l).unwrap();
            let b = model.simulate_single_led(&y, l).unwrap();
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn adjoint_identity_and_contraction() {
        let (cfg, _, model) = setup();
        for (l, seed) in [(0usize, 1u64), (20, 2), (44, 3), (70, 4)] {
            let x = random_field(105, seed, cfg.hires_pitch_um());
            let v = random_field(35, seed + 100, cfg.lores_pitch_um());
            let ax = model.forward_field(&x, l).unwrap();
            let ahv = model.adjoint_field(&v, l).unwrap();
            let lhs = crate::field::inner(flat(&ax.data), flat(&v.data));
            let rhs = crate::field::inner(flat(&x.data), flat(&ahv.data));
            let scale = crate::field::norm_sqr(flat(&x.data)).sqrt() * crate::field::norm_sqr(flat(&v.data)).sqrt();
            assert!((lhs - rhs).norm() / scale < 1e-12);
            assert!(crate::field::norm_sqr(flat(&ax.data)) <= crate::field::norm_sqr(flat(&x.data)));
        }
    }

    #[test]
    fn adjoint_of_zero_and_idempotent_projection() {
        let (cfg, _, model) = setup();
        let zero = ComplexField::constant(35, Complex64::new(0.0, 0.0), cfg.lores_pitch_um());
        let out = model.adjoint_field(&zero, 5).unwrap();
        assert!(out.data.iter().all(|v| v.norm() == 0.0));

        let x = random_field(105, 9, cfg.hires_pitch_um());
        let once = model.adjoint_field(&model.forward_field(&x, 30).unwrap(), 30).unwrap();
        let twice = model
            .adjoint_field(&model.forward_field(&once, 30).unwrap(), 30)
            .unwrap();
        for (a, b) in once.data.iter().zip(twice.data.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn out_of_band_window_is_reported() {
        let cfg = SystemConfig::default();
        let geo = build_led_geometry(&cfg).unwrap();
        // same LEDs on a grid too small to hold their windows
        let small = SystemConfig {
            upsample: 2,
            ..cfg.clone()
        };
        let err = ForwardModel::new(&small, &geo).unwrap_err();
        assert!(matches!(err, FpmError::OutOfBand { .. }), "{err}");
    }

    #[test]
    fn multiplex_cases() {
        let a = Array2::from_elem((3, 3), 2.0);
        let b = Array2::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f64);
        let singles = vec![a.clone(), b.clone()];
        assert_eq!(multiplex(&singles, &[0.0, 1.0]).unwrap(), b);
        assert_eq!(multiplex(&singles, &[0.0, 0.0]).unwrap(), Array2::zeros((3, 3)));
        let same = vec![b.clone(), b.clone()];
        let m = multiplex(&same, &[0.25, 0.75]).unwrap();
        assert!(m.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-15));
        assert!(matches!(multiplex(&singles, &[1.0]), Err(FpmError::Shape(_))));
    }

    #[test]
    fn shot_noise_statistics_and_determinism() {
        let cfg = SystemConfig::default();
        let n = 35;
        let stack = MeasurementStack {
            images: vec![Array2::from_elem((n, n), 1.0); 4],
            design_id: "t".into(),
            noisy: false,
            bright: vec![true; 4],
        };
        let scale = shot_noise_scale(&stack.images, &stack.bright, 10_000.0).unwrap();
        assert!((scale - 10_000.0).abs() < 1e-9);
        let noisy = add_shot_noise(&stack, &cfg, 7).unwrap();
        let npix = (4 * n * n) as f64;
        let mean: f64 = noisy.images.iter().map(|i| i.sum()).sum::<f64>() / npix;
        let sigma = 1.0 / (10_000.0 * npix).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sigma, "mean {mean}");
        assert_eq!(noisy, add_shot_noise(&stack, &cfg, 7).unwrap());
        assert_ne!(noisy, add_shot_noise(&stack, &cfg, 8).unwrap());

        let mixed = MeasurementStack {
            images: vec![Array2::from_elem((n, n), 1.0), Array2::zeros((n, n))],
            design_id: "t".into(),
            noisy: false,
            bright: vec![true, false],
        };
        let out = add_shot_noise(&mixed, &cfg, 1).unwrap();
        assert!(out.images[1].iter().all(|v| *v == 0.0));

        let dark = MeasurementStack {
            images: vec![Array2::zeros((n, n))],
            design_id: "t".into(),
            noisy: false,
            bright: vec![true],
        };
        assert!(matches!(add_shot_noise(&dark, &cfg, 1), Err(FpmError::ZeroBrightField)));
    }
}
