//! Simulate, reconstruct and score designs end to end.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::config::{Context, ReconConfig, SystemConfig};
use crate::design::DesignMatrix;
use crate::error::Result;
use crate::field::ComplexField;
use crate::metrics::{band_psnr, context_quantity, Band};
use crate::optics::{add_shot_noise, multiplex, ForwardModel, MeasurementStack};
use crate::phantom::Phantom;
use crate::recon::reconstruct;

/// Whether each design row lights at least one bright-field LED.
pub fn bright_rows(design: &DesignMatrix, model: &ForwardModel) -> Vec<bool> {
    design
        .weights
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(model.bright()).any(|(c, b)| *b && *c > 0.0))
        .collect()
}

pub fn stack_from_singles(
    singles: &[Array2<f64>],
    design: &DesignMatrix,
    model: &ForwardModel,
) -> Result<MeasurementStack> {
    let images = design
        .weights
        .rows()
        .into_iter()
        .map(|r| multiplex(singles, r.as_slice().expect("contiguous row")))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementStack {
        images,
        design_id: design.name.clone(),
        noisy: false,
        bright: bright_rows(design, model),
    })
}

/// Noiseless multiplexed stack of `x` under `design`.
pub fn simulate_stack(x: &ComplexField, design: &DesignMatrix, model: &ForwardModel) -> Result<MeasurementStack> {
    stack_from_singles(&model.simulate_all(x)?, design, model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsnrRow {
    pub design: String,
    pub k: usize,
    pub context: Context,
    pub lf_psnr: f64,
    pub hf_psnr: f64,
}

/// Simulates (optionally noisy) measurements of each phantom, reconstructs
/// and scores the context quantity in both bands.
pub fn evaluate_design(
    design: &DesignMatrix,
    phantoms: &[&Phantom],
    model: &ForwardModel,
    cfg: &SystemConfig,
    rcfg: &ReconConfig,
    context: Context,
    noise_seed: Option<u64>,
) -> Result<Vec<PsnrRow>> {
    let mut rows = Vec::with_capacity(phantoms.len());
    for (i, ph) in phantoms.iter().enumerate() {
        let mut stack = simulate_stack(&ph.field, design, model)?;
        if let Some(seed) = noise_seed {
            stack = add_shot_noise(&stack, cfg, seed.wrapping_add(i as u64))?;
        }
        let trace = reconstruct(&stack, design, model, rcfg)?;
        let amp = context.is_amplitude();
        let est = context_quantity(&trace.x_star, &ph.field, amp);
        let truth = context_quantity(&ph.field, &ph.field, amp);
        rows.push(PsnrRow {
            design: design.name.clone(),
            k: design.k(),
            context,
            lf_psnr: band_psnr(&est, &truth, Band::Low, cfg)?,
            hf_psnr: band_psnr(&est, &truth, Band::High, cfg)?,
        });
    }
    Ok(rows)
}

/// `(mean LF-PSNR, mean HF-PSNR)` of `rows`.
pub fn mean_psnr(rows: &[PsnrRow]) -> (f64, f64) {
    let n = rows.len().max(1) as f64;
    (
        rows.iter().map(|r| r.lf_psnr).sum::<f64>() / n,
        rows.iter().map(|r| r.hf_psnr).sum::<f64>() / n,
    )
}

/// CSV with one line per row followed by one `mean` line per design.
pub fn psnr_csv(rows: &[PsnrRow]) -> String {
    let mut s = String::from("design,K,context,lf_psnr,hf_psnr\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.4}",
            r.design, r.k, r.context, r.lf_psnr, r.hf_psnr
        );
    }
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.design.as_str()) {
            names.push(&r.design);
        }
    }
    for name in names {
        let group: Vec<PsnrRow> = rows.iter().filter(|r| r.design == name).cloned().collect();
        let (lf, hf) = mean_psnr(&group);
        let _ = writeln!(s, "{name}-mean,{},{},{lf:.4},{hf:.4}", group[0].k, group[0].context);
    }
    s
}
