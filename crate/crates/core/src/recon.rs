//! Phase retrieval by unrolled gradient descent on the multiplexed
//! intensity least-squares cost
//!
//! ```text
//! f(x) = sum_k || y_k - sum_l c_kl |A_l x|^2 ||^2
//! ```
//!
//! Gradients are taken with respect to the real parameterization
//! `(Re x, Im x)` and packed as `g = df/dRe + i df/dIm`.
//!
//! Each run starts from a constant field whose amplitude matches the mean
//! bright-field intensity. The step is `alpha / lambda`, where `lambda` is
//! the curvature of `f` along a uniform amplitude change of that initial
//! field, so `alpha` is a dimensionless fraction of the largest stable step.

use ndarray::Array2;
use num_complex::Complex64;

use crate::config::ReconConfig;
use crate::design::DesignMatrix;
use crate::error::{FpmError, Result};
use crate::field::ComplexField;
use crate::optics::{flat, to_array, ForwardModel, MeasurementStack};

type C = Complex64;

/// Constants of the uniform-mean initializer and the normalized step.
///
/// With `S` the summed measured intensity, `B = sum_k b_k` and
/// `Q = sum_k b_k^2` where `b_k` is the bright-field weight of row `k`:
/// `amplitude^2 = S / (q^2 B)` and `lambda = 8 S Q / (p^2 B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverInit {
    pub amplitude: f64,
    pub curvature: f64,
    pub step: f64,
    pub total_intensity: f64,
    pub bright_weight: f64,
    pub bright_weight_sq: f64,
}

pub fn solver_init(model: &ForwardModel, weights: &Array2<f64>, y: &[Vec<f64>], alpha: f64) -> Result<SolverInit> {
    let (p, q) = (model.patch_px() as f64, model.hires_px() as f64);
    let bright = model.bright();
    let b: Vec<f64> = weights
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(bright).filter(|(_, br)| **br).map(|(c, _)| c).sum())
        .collect();
    let bw: f64 = b.iter().sum();
    let bq: f64 = b.iter().map(|v| v * v).sum();
    if !(bw > 0.0) {
        return Err(FpmError::Config(
            "design has no bright-field illumination; cannot initialize".into(),
        ));
    }
    let s: f64 = y.iter().flatten().sum();
    if !(s > 0.0) {
        return Ok(SolverInit {
            amplitude: 0.0,
            curvature: 0.0,
            step: 0.0,
            total_intensity: s.max(0.0),
            bright_weight: bw,
            bright_weight_sq: bq,
        });
    }
    let amplitude = (s / (q * q * bw)).sqrt();
    let curvature = 8.0 * s * bq / (p * p * bw);
    Ok(SolverInit {
        amplitude,
        curvature,
        step: alpha / curvature,
        total_intensity: s,
        bright_weight: bw,
        bright_weight_sq: bq,
    })
}

/// Cost and gradient evaluation for one set of measurements and weights.
pub(crate) struct Objective<'a> {
    pub model: &'a ForwardModel,
    pub weights: &'a Array2<f64>,
    pub y: &'a [Vec<f64>],
    /// LEDs with at least one non-zero weight.
    pub active: Vec<usize>,
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a ForwardModel, weights: &'a Array2<f64>, y: &'a [Vec<f64>]) -> Self {
        let active = (0..weights.ncols())
            .filter(|&l| weights.column(l).iter().any(|c| *c != 0.0))
            .collect();
        Objective {
            model,
            weights,
            y,
            active,
        }
    }

    /// Returns `(cost, gradient)`; the gradient is skipped when not wanted.
    pub fn evaluate(&self, x: &[C], want_grad: bool) -> (f64, Option<Vec<C>>) {
        let m = self.model;
        let np = m.patch_px() * m.patch_px();
        let spec = m.spectrum(x);
        let mut fields = vec![vec![C::new(0.0, 0.0); np]; self.active.len()];
        let mut resid: Vec<Vec<f64>> = self.y.to_vec();
        for (z, &l) in fields.iter_mut().zip(&self.active) {
            m.apply_from_spectrum(&spec, l, z);
            for (k, r) in resid.iter_mut().enumerate() {
                let c = self.weights[[k, l]];
                if c != 0.0 {
                    for (ri, zi) in r.iter_mut().zip(z.iter()) {
                        *ri -= c * zi.norm_sqr();
                    }
                }
            }
        }
        let cost = resid.iter().flatten().map(|v| v * v).sum();
        if !want_grad {
            return (cost, None);
        }
        let mut acc = vec![C::new(0.0, 0.0); m.hires_px() * m.hires_px()];
        let mut w = vec![0.0; np];
        for (z, &l) in fields.iter_mut().zip(&self.active) {
            w.fill(0.0);
            for (k, r) in resid.iter().enumerate() {
                let c = self.weights[[k, l]];
                if c != 0.0 {
                    for (wi, ri) in w.iter_mut().zip(r) {
                        *wi += c * ri;
                    }
                }
            }
            for (zi, wi) in z.iter_mut().zip(&w) {
                *zi *= *wi;
            }
            m.accumulate_adjoint(z, l, &mut acc);
        }
        let mut g = m.finish_adjoint(acc);
        for v in g.iter_mut() {
            *v *= -4.0;
        }
        (cost, Some(g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconTrace {
    pub x_star: ComplexField,
    /// Cost at every iterate, `x_0` through `x_T`.
    pub cost_history: Vec<f64>,
    /// Iterates retained for a reverse pass, as `(iteration, field)`.
    pub retained_states: Option<Vec<(usize, ComplexField)>>,
    pub init: SolverInit,
}

pub(crate) fn stack_vectors(
    stack: &MeasurementStack,
    design: &DesignMatrix,
    model: &ForwardModel,
) -> Result<Vec<Vec<f64>>> {
    if stack.len() != design.k() {
        return Err(FpmError::Shape(format!(
            "stack has K = {} measurements but design has K = {}",
            stack.len(),
            design.k()
        )));
    }
    if design.l() != model.num_leds() {
        return Err(FpmError::Shape(format!(
            "design has L = {} LEDs but geometry has {}",
            design.l(),
            model.num_leds()
        )));
    }
    let p = model.patch_px();
    stack
        .images
        .iter()
        .map(|img| {
            if img.dim() != (p, p) {
                return Err(FpmError::Shape(format!(
                    "measurement is {:?}, expected {p}x{p}",
                    img.dim()
                )));
            }
            Ok(img.iter().cloned().collect())
        })
        .collect()
}

fn check_field(x: &ComplexField, model: &ForwardModel) -> Result<()> {
    let q = model.hires_px();
    if x.shape() != (q, q) {
        return Err(FpmError::Shape(format!("field is {:?}, expected {q}x{q}", x.shape())));
    }
    Ok(())
}

pub fn cost(x: &ComplexField, stack: &MeasurementStack, design: &DesignMatrix, model: &ForwardModel) -> Result<f64> {
    check_field(x, model)?;
    let y = stack_vectors(stack, design, model)?;
    let obj = Objective::new(model, &design.weights, &y);
    Ok(obj.evaluate(flat(&x.data), false).0)
}

/// `-4 sum_k sum_l c_kl A_l^H(r_k * A_l x)`.
pub fn grad_x(
    x: &ComplexField,
    stack: &MeasurementStack,
    design: &DesignMatrix,
    model: &ForwardModel,
) -> Result<ComplexField> {
    check_field(x, model)?;
    let y = stack_vectors(stack, design, model)?;
    let obj = Objective::new(model, &design.weights, &y);
    let g = obj.evaluate(flat(&x.data), true).1.expect("gradient requested");
    Ok(ComplexField::new(to_array(g, model.hires_px()), x.pitch_um))
}

pub(crate) fn initial_field(init: &SolverInit, phase: f64, n: usize) -> Vec<C> {
    vec![C::from_polar(init.amplitude, phase); n * n]
}

fn is_finite(x: &[C]) -> bool {
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Runs `unroll_t` gradient steps from the uniform-mean initializer.
pub fn reconstruct(
    stack: &MeasurementStack,
    design: &DesignMatrix,
    model: &ForwardModel,
    rcfg: &ReconConfig,
) -> Result<ReconTrace> {
    rcfg.validate()?;
    let y = stack_vectors(stack, design, model)?;
    let init = solver_init(model, &design.weights, &y, rcfg.step_alpha)?;
    let obj = Objective::new(model, &design.weights, &y);
    let q = model.hires_px();
    let mut x = initial_field(&init, rcfg.init_phase, q);
    let mut history = Vec::with_capacity(rcfg.unroll_t + 1);
    for t in 0..rcfg.unroll_t {
        let (c, g) = obj.evaluate(&x, true);
        history.push(c);
        for (xi, gi) in x.iter_mut().zip(g.expect("gradient requested")) {
            *xi -= init.step * gi;
        }
        if !is_finite(&x) {
            return Err(FpmError::Divergence { iteration: t + 1 });
        }
    }
    history.push(obj.evaluate(&x, false).0);
    Ok(ReconTrace {
        x_star: ComplexField::new(to_array(x, q), model.hires_pitch_um()),
        cost_history: history,
        retained_states: None,
        init,
    })
}
