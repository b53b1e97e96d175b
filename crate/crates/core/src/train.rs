//! Learning LED designs by differentiating through the unrolled solver.
//!
//! The reverse pass is hand-derived. For one gradient step
//! `x' = x - eta g(x)` with `g = -4 sum_l A_l^H (w_l z_l)`, `z_l = A_l x`,
//! `r_k = y_k - sum_l c_kl |z_l|^2` and `w_l = sum_k c_kl r_k`, the adjoint
//! `lam` of `x'` maps back through
//!
//! ```text
//! u_l  = A_l lam,   h_l = Re(conj(u_l) z_l),   H_k = sum_l c_kl h_l
//! dw_l = -2 sum_k c_kl H_k
//! lam <- lam + 4 eta sum_l A_l^H (dw_l z_l + w_l u_l)
//! dC_ab += 4 eta (<r_a, h_b> + <Y_b - |z_b|^2, H_a>)
//! deta  -= Re <lam', g>
//! ```
//!
//! where `Y_b` is the single-LED image of LED `b`. The initializer amplitude
//! and the normalized step both depend on `C` and are differentiated too.

use std::fmt::Write as _;

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Context, SystemConfig, TrainConfig};
use crate::design::{context_mask, project, DesignMatrix};
use crate::error::{FpmError, Result};
use crate::field::{alignment_phase, inner, wrap_angle, ComplexField};
use crate::optics::{flat, measurement_rng, poisson_resample, shot_noise_scale, to_array, ForwardModel};
use crate::phantom::{Dataset, Split};
use crate::recon::{initial_field, solver_init, Objective};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    /// Weight of the amplitude term; the phase term gets `1 - gamma`.
    pub gamma: f64,
    /// Compare phases as principal values in `(-pi, pi]`.
    pub phase_wrap: bool,
    /// Remove the global phase of the estimate before comparing.
    pub global_phase_align: bool,
}

impl LossSpec {
    pub fn for_context(context: Context) -> Self {
        LossSpec {
            gamma: context.gamma(),
            phase_wrap: true,
            global_phase_align: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(FpmError::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Loss and its gradient with respect to `x` (packed as `dRe + i dIm`),
/// including the dependence of the alignment phase on `x`.
pub(crate) fn loss_grad(x: &[C], truth: &[C], spec: &LossSpec) -> (f64, Vec<C>) {
    let overlap = inner(x, truth);
    let theta = if spec.global_phase_align {
        alignment_phase(x, truth)
    } else {
        0.0
    };
    let rot = C::from_polar(1.0, theta);
    let (ga, gp) = (spec.gamma, 1.0 - spec.gamma);
    let mut total = 0.0;
    let mut dtheta = 0.0;
    let mut grad = vec![ZERO; x.len()];
    for ((xi, ti), gi) in x.iter().zip(truth).zip(grad.iter_mut()) {
        let ax = xi.norm();
        let da = ax - ti.norm();
        let mut dp = (xi * rot).arg() - ti.arg();
        if spec.phase_wrap {
            dp = wrap_angle(dp);
        }
        total += ga * da * da + gp * dp * dp;
        dtheta += 2.0 * gp * dp;
        if ax > 0.0 {
            *gi = 2.0 * ga * da * xi / ax + 2.0 * gp * dp * C::i() * xi / (ax * ax);
        }
    }
    // theta = arg sum conj(x) t, so d theta / dx_j = -i t_j / overlap
    if spec.global_phase_align && dtheta != 0.0 && overlap.norm() > 0.0 {
        for (gi, ti) in grad.iter_mut().zip(truth) {
            *gi += dtheta * (-C::i() * ti / overlap);
        }
    }
    (total, grad)
}

pub fn loss(x_star: &ComplexField, x_true: &ComplexField, spec: &LossSpec) -> Result<f64> {
    if x_star.shape() != x_true.shape() {
        return Err(FpmError::Shape(format!(
            "estimate {:?} vs truth {:?}",
            x_star.shape(),
            x_true.shape()
        )));
    }
    spec.validate()?;
    Ok(loss_grad(flat(&x_star.data), flat(&x_true.data), spec).0)
}

/// One training object: its single-LED images, ground truth and an optional
/// additive noise offset per measurement (held constant when differentiating).
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub singles: Vec<Array2<f64>>,
    pub truth: ComplexField,
    pub noise: Option<Vec<Array2<f64>>>,
}

impl TrainingExample {
    pub fn new(model: &ForwardModel, truth: &ComplexField) -> Result<Self> {
        Ok(TrainingExample {
            singles: model.simulate_all(truth)?,
            truth: truth.clone(),
            noise: None,
        })
    }

    /// Multiplexed measurements `y_k = sum_l c_kl Y_l + e_k`, flattened.
    pub fn measurements(&self, weights: &Array2<f64>) -> Vec<Vec<f64>> {
        let np = self.singles.first().map_or(0, |s| s.len());
        weights
            .rows()
            .into_iter()
            .enumerate()
            .map(|(k, row)| {
                let mut y = match &self.noise {
                    Some(e) => flat(&e[k]).to_vec(),
                    None => vec![0.0; np],
                };
                for (c, img) in row.iter().zip(&self.singles) {
                    if *c != 0.0 {
                        for (yi, v) in y.iter_mut().zip(flat(img)) {
                            *yi += c * v;
                        }
                    }
                }
                y
            })
            .collect()
    }

    /// Draws a shot-noise offset for `weights`, replacing any previous one.
    pub fn with_shot_noise(mut self, weights: &Array2<f64>, bright: &[bool], counts: f64, seed: u64) -> Result<Self> {
        self.noise = None;
        let p = self.singles.first().map_or(0, |s| s.nrows());
        let clean: Vec<Array2<f64>> = self.measurements(weights).into_iter().map(|y| to_array(y, p)).collect();
        let scale = shot_noise_scale(&clean, bright, counts)?;
        self.noise = Some(
            clean
                .iter()
                .enumerate()
                .map(|(k, m)| poisson_resample(m, scale, &mut measurement_rng(seed, k)) - m)
                .collect(),
        );
        Ok(self)
    }
}

fn step_field(obj: &Objective, x: &mut [C], eta: f64, t: usize) -> Result<()> {
    let g = obj.evaluate(x, true).1.expect("gradient requested");
    for (xi, gi) in x.iter_mut().zip(g) {
        *xi -= eta * gi;
    }
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(FpmError::Divergence { iteration: t + 1 });
    }
    Ok(())
}

/// Reverse pass through one solver step at iterate `x`; updates `lam`, `dc`, `deta`.
#[allow(clippy::too_many_arguments)]
fn backward_step(
    model: &ForwardModel,
    weights: &Array2<f64>,
    singles: &[&[f64]],
    y: &[Vec<f64>],
    x: &[C],
    eta: f64,
    lam: &mut [C],
    dc: &mut Array2<f64>,
    deta: &mut f64,
) {
    let (kk, ll) = weights.dim();
    let np = model.patch_px() * model.patch_px();
    let spec = model.spectrum(x);
    let mut z = vec![vec![ZERO; np]; ll];
    for (l, zl) in z.iter_mut().enumerate() {
        model.apply_from_spectrum(&spec, l, zl);
    }
    let inten: Vec<Vec<f64>> = z.iter().map(|zl| zl.iter().map(|v| v.norm_sqr()).collect()).collect();
    let mut r = y.to_vec();
    for (k, rk) in r.iter_mut().enumerate() {
        for l in 0..ll {
            let c = weights[[k, l]];
            if c != 0.0 {
                for (ri, ii) in rk.iter_mut().zip(&inten[l]) {
                    *ri -= c * ii;
                }
            }
        }
    }
    let weighted = |coef: &dyn Fn(usize, usize) -> f64, src: &[Vec<f64>], l: usize| {
        let mut out = vec![0.0; np];
        for (k, s) in src.iter().enumerate() {
            let c = coef(k, l);
            if c != 0.0 {
                for (o, v) in out.iter_mut().zip(s) {
                    *o += c * v;
                }
            }
        }
        out
    };
    let cw = |k: usize, l: usize| weights[[k, l]];
    let w: Vec<Vec<f64>> = (0..ll).map(|l| weighted(&cw, &r, l)).collect();

    // step-size sensitivity needs g at this iterate
    let nq = model.hires_px() * model.hires_px();
    let mut acc = vec![ZERO; nq];
    let mut buf = vec![ZERO; np];
    for l in 0..ll {
        for ((b, zi), wi) in buf.iter_mut().zip(&z[l]).zip(&w[l]) {
            *b = zi * wi;
        }
        model.accumulate_adjoint(&mut buf, l, &mut acc);
    }
    let g = model.finish_adjoint(acc);
    *deta += 4.0 * lam.iter().zip(&g).map(|(a, b)| a.re * b.re + a.im * b.im).sum::<f64>();

    let lspec = model.spectrum(lam);
    let mut u = vec![vec![ZERO; np]; ll];
    for (l, ul) in u.iter_mut().enumerate() {
        model.apply_from_spectrum(&lspec, l, ul);
    }
    let h: Vec<Vec<f64>> = u
        .iter()
        .zip(&z)
        .map(|(ul, zl)| ul.iter().zip(zl).map(|(a, b)| a.re * b.re + a.im * b.im).collect())
        .collect();
    let hh: Vec<Vec<f64>> = (0..kk)
        .map(|k| {
            let mut out = vec![0.0; np];
            for l in 0..ll {
                let c = weights[[k, l]];
                if c != 0.0 {
                    for (o, v) in out.iter_mut().zip(&h[l]) {
                        *o += c * v;
                    }
                }
            }
            out
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for l in 0..ll {
        let d: Vec<f64> = singles[l].iter().zip(&inten[l]).map(|(a, b)| a - b).collect();
        for k in 0..kk {
            dc[[k, l]] += 4.0 * eta * (dot(&r[k], &h[l]) + dot(&d, &hh[k]));
        }
    }

    let mut acc = vec![ZERO; nq];
    for l in 0..ll {
        let dw = weighted(&cw, &hh, l);
        for (((b, zi), ui), (dwi, wi)) in buf.iter_mut().zip(&z[l]).zip(&u[l]).zip(dw.iter().zip(&w[l])) {
            *b = -2.0 * dwi * zi + wi * ui;
        }
        model.accumulate_adjoint(&mut buf, l, &mut acc);
    }
    let hl = model.finish_adjoint(acc);
    for (li, hi) in lam.iter_mut().zip(hl) {
        *li += 4.0 * eta * hi;
    }
}

/// Loss of one example and its gradient with respect to the weights.
fn example_gradient(
    model: &ForwardModel,
    weights: &Array2<f64>,
    ex: &TrainingExample,
    spec: &LossSpec,
    tcfg: &TrainConfig,
) -> Result<(f64, Array2<f64>)> {
    let rcfg = &tcfg.unroll;
    let q = model.hires_px();
    let (kk, ll) = weights.dim();
    if ex.singles.len() != ll {
        return Err(FpmError::Shape(format!(
            "example has {} single-LED images, design has L = {ll}",
            ex.singles.len()
        )));
    }
    let y = ex.measurements(weights);
    let init = solver_init(model, weights, &y, rcfg.step_alpha)?;
    let obj = Objective::new(model, weights, &y);
    let eta = init.step;
    let stride = tcfg.stride();
    let t_total = rcfg.unroll_t;

    let mut x = initial_field(&init, rcfg.init_phase, q);
    let mut checkpoints = Vec::with_capacity(t_total / stride + 1);
    for t in 0..t_total {
        if t % stride == 0 {
            checkpoints.push(x.clone());
        }
        step_field(&obj, &mut x, eta, t)?;
    }
    let (value, mut lam) = loss_grad(&x, flat(&ex.truth.data), spec);

    let singles: Vec<&[f64]> = ex.singles.iter().map(flat).collect();
    let mut dc = Array2::zeros((kk, ll));
    let mut deta = 0.0;
    for (seg, start) in checkpoints.into_iter().enumerate().rev() {
        let t0 = seg * stride;
        let t1 = (t0 + stride).min(t_total);
        let mut states = Vec::with_capacity(t1 - t0);
        let mut xs = start;
        for t in t0..t1 {
            states.push(xs.clone());
            if t + 1 < t1 {
                step_field(&obj, &mut xs, eta, t)?;
            }
        }
        for xt in states.iter().rev() {
            backward_step(model, weights, &singles, &y, xt, eta, &mut lam, &mut dc, &mut deta);
        }
    }

    if init.total_intensity > 0.0 {
        let dir = C::from_polar(1.0, rcfg.init_phase);
        let da0: f64 = lam.iter().map(|v| v.re * dir.re + v.im * dir.im).sum();
        let (s, bw, bq, a0) = (
            init.total_intensity,
            init.bright_weight,
            init.bright_weight_sq,
            init.amplitude,
        );
        let bright = model.bright();
        let b: Vec<f64> = weights
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(bright).filter(|(_, br)| **br).map(|(c, _)| c).sum())
            .collect();
        let sum_y: Vec<f64> = singles.iter().map(|s| s.iter().sum()).collect();
        for k in 0..kk {
            for l in 0..ll {
                let beta = if bright[l] { 1.0 } else { 0.0 };
                let base = sum_y[l] / s - beta / bw;
                let dln_a0 = 0.5 * base;
                let dln_eta = -(base + 2.0 * beta * b[k] / bq);
                dc[[k, l]] += da0 * a0 * dln_a0 + deta * eta * dln_eta;
            }
        }
    }
    Ok((value, dc))
}

/// Mean batch loss and its gradient with respect to the design weights.
pub fn loss_and_grad_design(
    batch: &[TrainingExample],
    weights: &Array2<f64>,
    model: &ForwardModel,
    spec: &LossSpec,
    tcfg: &TrainConfig,
) -> Result<(f64, Array2<f64>)> {
    spec.validate()?;
    tcfg.validate()?;
    if batch.is_empty() {
        return Err(FpmError::Config("empty batch".into()));
    }
    let parts: Vec<Result<(f64, Array2<f64>)>> = batch
        .par_iter()
        .map(|ex| example_gradient(model, weights, ex, spec, tcfg))
        .collect();
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(weights.dim());
    for part in parts {
        let (v, g) = part?;
        total += v;
        grad += &g;
    }
    Ok((total / n, grad / n))
}

/// `d(mean batch loss)/dC`.
pub fn grad_design(
    batch: &[TrainingExample],
    weights: &Array2<f64>,
    model: &ForwardModel,
    spec: &LossSpec,
    tcfg: &TrainConfig,
) -> Result<Array2<f64>> {
    Ok(loss_and_grad_design(batch, weights, model, spec, tcfg)?.1)
}

/// Loss after a forward-only unroll.
pub fn example_loss(
    model: &ForwardModel,
    weights: &Array2<f64>,
    ex: &TrainingExample,
    spec: &LossSpec,
    tcfg: &TrainConfig,
) -> Result<f64> {
    let y = ex.measurements(weights);
    let init = solver_init(model, weights, &y, tcfg.unroll.step_alpha)?;
    let obj = Objective::new(model, weights, &y);
    let mut x = initial_field(&init, tcfg.unroll.init_phase, model.hires_px());
    for t in 0..tcfg.unroll.unroll_t {
        step_field(&obj, &mut x, init.step, t)?;
    }
    Ok(loss_grad(&x, flat(&ex.truth.data), spec).0)
}

/// Restricts `grad` to directions that keep masked entries at zero and row sums fixed.
pub fn tangent_gradient(grad: &Array2<f64>, mask: &Array2<bool>) -> Array2<f64> {
    let mut out = grad.clone();
    for (mut row, mrow) in out.rows_mut().into_iter().zip(mask.rows()) {
        let n = mrow.iter().filter(|m| **m).count();
        let mean = if n > 0 {
            row.iter()
                .zip(mrow.iter())
                .filter(|(_, m)| **m)
                .map(|(g, _)| g)
                .sum::<f64>()
                / n as f64
        } else {
            0.0
        };
        for (g, m) in row.iter_mut().zip(mrow.iter()) {
            *g = if *m { *g - mean } else { 0.0 };
        }
    }
    out
}

/// Projected gradient step `project(C - lr * tangent(G))`.
pub fn sgd_step(design: &DesignMatrix, grad: &Array2<f64>, lr: f64) -> Result<DesignMatrix> {
    let step = tangent_gradient(grad, &design.mask);
    let raw = &design.weights - &(step * lr);
    Ok(DesignMatrix {
        weights: project(&raw, &design.mask)?,
        ..design.clone()
    })
}

/// `C ~ Uniform(0, 1)` projected onto the feasible set of `mask`.
pub fn random_design(mask: &Array2<bool>, context: Context, seed: u64) -> Result<DesignMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Array2::from_shape_fn(mask.dim(), |_| rng.random::<f64>());
    Ok(DesignMatrix {
        weights: project(&raw, mask)?,
        mask: mask.clone(),
        context: Some(context),
        name: format!("learned-{}", mask.nrows()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_loss\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:.10e},{:.10e}", r.epoch, r.train_loss, r.test_loss);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Design with the lowest test loss, including the initial one (epoch 0).
    pub best: DesignMatrix,
    pub best_epoch: usize,
    pub last: DesignMatrix,
    pub log: TrainLog,
}

/// What an observer sees after each projected step.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub epoch: usize,
    pub step: usize,
    pub batch_loss: f64,
    pub design: &'a DesignMatrix,
}

/// Inputs shared by the training loop.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub cfg: &'a SystemConfig,
    pub model: &'a ForwardModel,
    pub geometry: &'a crate::optics::LedGeometry,
    pub k: usize,
    pub context: Context,
}

fn noise_seed(base: u64, epoch: usize, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base ^ 0x6e6f_6973_6521);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng.random()
}

fn noisy_example(
    ex: &TrainingExample,
    design: &DesignMatrix,
    setup: &TrainSetup,
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingExample> {
    if !tcfg.train_noise {
        return Ok(ex.clone());
    }
    let bright = crate::pipeline::bright_rows(design, setup.model);
    ex.clone()
        .with_shot_noise(&design.weights, &bright, setup.cfg.bright_mean_counts, seed)
}

/// Mean loss over the test split with a fixed noise draw per phantom.
pub fn test_loss(
    design: &DesignMatrix,
    test: &[TrainingExample],
    setup: &TrainSetup,
    tcfg: &TrainConfig,
) -> Result<f64> {
    let spec = LossSpec::for_context(setup.context);
    let losses: Vec<Result<f64>> = test
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let ex = noisy_example(ex, design, setup, tcfg, noise_seed(tcfg.seed, usize::MAX >> 32, i))?;
            example_loss(setup.model, &design.weights, &ex, &spec, tcfg)
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / test.len().max(1) as f64)
}

/// Builds clean training examples for one split of a dataset.
pub fn examples_for(dataset: &Dataset, split: Split, model: &ForwardModel) -> Result<Vec<TrainingExample>> {
    dataset
        .split(split)
        .into_iter()
        .map(|p| TrainingExample::new(model, &p.field))
        .collect()
}

pub fn train(dataset: &Dataset, setup: &TrainSetup, tcfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(dataset, setup, tcfg, &mut |_| {})
}

/// Projected SGD from a random feasible design; `observer` runs after every step.
pub fn train_with_observer(
    dataset: &Dataset,
    setup: &TrainSetup,
    tcfg: &TrainConfig,
    observer: &mut dyn FnMut(&StepEvent),
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    let train_set = examples_for(dataset, Split::Train, setup.model)?;
    let test_set = examples_for(dataset, Split::Test, setup.model)?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(FpmError::Config("dataset needs both train and test phantoms".into()));
    }
    let mask = context_mask(setup.geometry, setup.k, setup.context)?;
    let mut design = random_design(&mask, setup.context, tcfg.seed)?;
    let spec = LossSpec::for_context(setup.context);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(1));

    let mut best = design.clone();
    let mut best_loss = test_loss(&design, &test_set, setup, tcfg)?;
    let mut best_epoch = 0;
    let mut records = Vec::with_capacity(tcfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for (step, chunk) in order.chunks(tcfg.batch).enumerate() {
            let batch = chunk
                .iter()
                .map(|&i| noisy_example(&train_set[i], &design, setup, tcfg, noise_seed(tcfg.seed, epoch, i)))
                .collect::<Result<Vec<_>>>()?;
            let (value, grad) = loss_and_grad_design(&batch, &design.weights, setup.model, &spec, tcfg)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(FpmError::NonFiniteLoss { epoch });
            }
            sum += value * chunk.len() as f64;
            design = sgd_step(&design, &grad, tcfg.lr)?;
            observer(&StepEvent {
                epoch,
                step,
                batch_loss: value,
                design: &design,
            });
        }
        let train_loss = sum / train_set.len() as f64;
        let tl = test_loss(&design, &test_set, setup, tcfg)?;
        if !tl.is_finite() {
            return Err(FpmError::NonFiniteLoss { epoch });
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            test_loss: tl,
        });
        if tl < best_loss {
            best_loss = tl;
            best = design.clone();
            best_epoch = epoch;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: design,
        log: TrainLog { records },
    })
}
