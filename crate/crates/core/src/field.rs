use ndarray::Array2;
use num_complex::Complex64;

/// A sampled complex field with its sample-plane pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub data: Array2<Complex64>,
    pub pitch_um: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, pitch_um: f64) -> Self {
        ComplexField { data, pitch_um }
    }

    pub fn constant(n: usize, value: Complex64, pitch_um: f64) -> Self {
        ComplexField {
            data: Array2::from_elem((n, n), value),
            pitch_um,
        }
    }

    /// `exp(i*phi - mu)` elementwise.
    pub fn from_absorption_phase(mu: &Array2<f64>, phi: &Array2<f64>, pitch_um: f64) -> Self {
        let data = ndarray::Zip::from(mu)
            .and(phi)
            .map_collect(|&m, &p| Complex64::from_polar((-m).exp(), p));
        ComplexField { data, pitch_um }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.data.mapv(|v| v.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(|v| v.arg())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// `<a, b> = sum conj(a) * b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// Real part of the complex inner product: the Euclidean inner product of
/// the `(re, im)` parameterization.
pub fn real_inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Phase `theta = arg <estimate, truth>` that best aligns `estimate * e^{i theta}` with `truth`.
pub fn alignment_phase(estimate: &[Complex64], truth: &[Complex64]) -> f64 {
    inner(estimate, truth).arg()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
