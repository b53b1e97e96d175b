//! Frequency-band PSNR: low band up to NA 0.4, high band from 0.4 to 0.62.

use ndarray::Array2;
use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{FpmError, Result};
use crate::fft::{signed_freq, Fft2};
use crate::field::{alignment_phase, ComplexField};
use crate::optics::{flat, to_array};

pub const LF_NA: f64 = 0.4;
pub const HF_NA: f64 = 0.62;
/// Reported in place of an infinite PSNR.
pub const PSNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    Low,
    High,
    /// Annulus `(na_lo, na_hi]`; `na_lo = 0` includes DC.
    Custom(f64, f64),
}

impl Band {
    pub fn limits(&self) -> (f64, f64) {
        match *self {
            Band::Low => (0.0, LF_NA),
            Band::High => (LF_NA, HF_NA),
            Band::Custom(lo, hi) => (lo, hi),
        }
    }
}

/// Flat mask of the `n x n` frequency grid selecting `na_lo/lambda < |u| <= na_hi/lambda`.
pub fn band_mask(n: usize, freq_step: f64, wavelength_um: f64, na_lo: f64, na_hi: f64) -> Vec<bool> {
    let (lo, hi) = (na_lo / wavelength_um, na_hi / wavelength_um);
    let mut mask = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let rho = freq_step * (signed_freq(ix, n) as f64).hypot(signed_freq(iy, n) as f64);
            mask.push((na_lo == 0.0 || rho > lo) && rho <= hi);
        }
    }
    mask
}

pub(crate) fn filter_complex(data: &[Complex64], n: usize, mask: &[bool]) -> Vec<Complex64> {
    let fft = Fft2::new(n);
    let mut buf = data.to_vec();
    fft.forward(&mut buf);
    for (v, keep) in buf.iter_mut().zip(mask) {
        if !keep {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    fft.inverse(&mut buf);
    buf
}

fn check_square(img: &Array2<f64>, cfg: &SystemConfig) -> Result<usize> {
    let q = cfg.hires_px();
    if img.dim() != (q, q) {
        return Err(FpmError::Shape(format!("image is {:?}, expected {q}x{q}", img.dim())));
    }
    Ok(q)
}

/// Real part of the band-passed image.
pub fn band_filter(img: &Array2<f64>, na_lo: f64, na_hi: f64, cfg: &SystemConfig) -> Result<Array2<f64>> {
    if !(na_lo >= 0.0 && na_lo < na_hi) {
        return Err(FpmError::Config(format!(
            "band limits must satisfy 0 <= na_lo < na_hi, got ({na_lo}, {na_hi})"
        )));
    }
    let q = check_square(img, cfg)?;
    let mask = band_mask(q, cfg.freq_step(), cfg.wavelength_um, na_lo, na_hi);
    let data: Vec<Complex64> = img.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    let out = filter_complex(&data, q, &mask);
    Ok(to_array(out.into_iter().map(|v| v.re).collect(), q))
}

/// PSNR of `recon` against `truth` within `band`. The peak is the dynamic
/// range of the band-filtered truth, so the measure is not symmetric.
pub fn band_psnr(recon: &Array2<f64>, truth: &Array2<f64>, band: Band, cfg: &SystemConfig) -> Result<f64> {
    let (lo, hi) = band.limits();
    let fr = band_filter(recon, lo, hi, cfg)?;
    let ft = band_filter(truth, lo, hi, cfg)?;
    let max = ft.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ft.iter().cloned().fold(f64::INFINITY, f64::min);
    let peak = max - min;
    if !(peak > 1e-12 * max.abs().max(1.0)) {
        return Err(FpmError::UndefinedPeak);
    }
    let mse = fr.iter().zip(ft.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / fr.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Multiplies `estimate` by the global phase that best aligns it with `truth`.
pub fn align_global_phase(estimate: &ComplexField, truth: &ComplexField) -> ComplexField {
    let theta = alignment_phase(flat(&estimate.data), flat(&truth.data));
    let rot = Complex64::from_polar(1.0, theta);
    ComplexField::new(estimate.data.mapv(|v| v * rot), estimate.pitch_um)
}

/// The quantity compared for a context: amplitude, or the phase after global alignment.
pub fn context_quantity(x: &ComplexField, truth: &ComplexField, amplitude: bool) -> Array2<f64> {
    if amplitude {
        x.amplitude()
    } else {
        align_global_phase(x, truth).phase()
    }
}

/// `||LP(align(x) - truth)|| / ||LP(truth)||` with `LP` the disk `|u| <= na/lambda`.
pub fn aligned_band_error(x: &ComplexField, truth: &ComplexField, na: f64, cfg: &SystemConfig) -> Result<f64> {
    let q = cfg.hires_px();
    if x.shape() != (q, q) || truth.shape() != (q, q) {
        return Err(FpmError::Shape("fields must be q x q".into()));
    }
    let aligned = align_global_phase(x, truth);
    let mask = band_mask(q, cfg.freq_step(), cfg.wavelength_um, 0.0, na);
    let diff: Vec<Complex64> = flat(&aligned.data)
        .iter()
        .zip(flat(&truth.data))
        .map(|(a, b)| a - b)
        .collect();
    let num: f64 = filter_complex(&diff, q, &mask).iter().map(|v| v.norm_sqr()).sum();
    let den: f64 = filter_complex(flat(&truth.data), q, &mask)
        .iter()
        .map(|v| v.norm_sqr())
        .sum();
    Ok((num / den).sqrt())
}
