use ndarray::Array2;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fpm_core::design::{context_mask, heuristic_design, single_led_design};
use fpm_core::field::{inner, norm_sqr};
use fpm_core::phantom::{disk_phantom, generate_phantom};
use fpm_core::pipeline::simulate_stack;
use fpm_core::train::{loss, random_design, sgd_step, LossSpec};
use fpm_core::{
    build_led_geometry, reconstruct, ComplexField, Context, ForwardModel, LedGeometry, ReconConfig, SystemConfig,
};

fn system(patch_px: usize) -> (SystemConfig, LedGeometry, ForwardModel) {
    let cfg = SystemConfig {
        patch_px,
        ..SystemConfig::default()
    };
    let geo = build_led_geometry(&cfg).unwrap();
    let model = ForwardModel::new(&cfg, &geo).unwrap();
    (cfg, geo, model)
}

fn random_field(n: usize, seed: u64, pitch: f64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexField::new(
        Array2::from_shape_fn((n, n), |_| {
            C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        }),
        pitch,
    )
}

fn flat(a: &Array2<C>) -> &[C] {
    a.as_slice().unwrap()
}

fn contrast(img: &Array2<f64>) -> f64 {
    let n = img.len() as f64;
    let mean = img.sum() / n;
    (img.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt() / mean
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_identity_holds_for_every_led(l in 0usize..89, seed in 0u64..1000) {
        let (cfg, _, model) = system(11);
        let x = random_field(cfg.hires_px(), seed, cfg.hires_pitch_um());
        let v = random_field(11, seed + 7919, cfg.lores_pitch_um());
        let lhs = inner(flat(&model.forward_field(&x, l).unwrap().data), flat(&v.data));
        let rhs = inner(flat(&x.data), flat(&model.adjoint_field(&v, l).unwrap().data));
        let scale = (norm_sqr(flat(&x.data)) * norm_sqr(flat(&v.data))).sqrt();
        prop_assert!((lhs - rhs).norm() / scale <= 1e-10);
    }

    #[test]
    fn weak_sample_separates_bright_and_dark_field(seed in 0u64..1000) {
        let (cfg, geo, model) = system(35);
        let eps = 1e-3;
        let p = random_field(cfg.hires_px(), seed, cfg.hires_pitch_um());
        let x = ComplexField::new(p.data.mapv(|v| C::new(1.0, 0.0) + v * eps), p.pitch_um);
        let mut displaced = Vec::new();
        for (l, led) in geo.leds.iter().enumerate() {
            let img = model.simulate_single_led(&x, l).unwrap();
            let mean = img.sum() / img.len() as f64;
            let (sy, sx) = model.shift(l);
            let dc_in_pupil = cfg.freq_step() * (sy as f64).hypot(sx as f64) < cfg.pupil_cutoff();
            if dc_in_pupil {
                prop_assert!(led.is_bright());
                prop_assert!(mean > 0.5, "bright LED {l}: {mean}");
            } else {
                prop_assert!(mean < 10.0 * eps * eps, "LED {l}: {mean}");
                if led.is_bright() {
                    displaced.push(led.grid_index);
                }
            }
        }
        displaced.sort();
        let edge = vec![(-2, -1), (-2, 1), (-1, -2), (-1, 2), (1, -2), (1, 2), (2, -1), (2, 1)];
        prop_assert_eq!(displaced, edge);
    }

    #[test]
    fn mirrored_bright_pair_cancels_phase_contrast(m in -2i32..=2, n in -2i32..=2, radius in 4.0f64..14.0) {
        prop_assume!((m, n) != (0, 0));
        let (cfg, geo, model) = system(21);
        let (Some(a), Some(b)) = (geo.index_of((m, n)), geo.index_of((-m, -n))) else {
            return Ok(());
        };
        prop_assume!(geo.leds[a].is_bright());
        let phase = disk_phantom(&cfg, radius, false).field;
        let ia = model.simulate_single_led(&phase, a).unwrap();
        let ib = model.simulate_single_led(&phase, b).unwrap();
        let sum = contrast(&(&ia + &ib));
        prop_assert!(sum < contrast(&ia) && sum < contrast(&ib));

        let amp = disk_phantom(&cfg, radius, true).field;
        let ia = model.simulate_single_led(&amp, a).unwrap();
        let ib = model.simulate_single_led(&amp, b).unwrap();
        let single = contrast(&ia).max(contrast(&ib));
        prop_assert!(contrast(&(&ia + &ib)) >= single * (1.0 - 1e-12));
    }

    #[test]
    fn heuristic_rows_partition_dark_field_evenly(k in 4usize..=71, seed in 0u64..50) {
        let (_, geo, _) = system(9);
        let d = heuristic_design(&geo, k, seed).unwrap();
        prop_assert!(d.check_feasible(1e-12).is_ok());
        prop_assert_eq!(&d, &heuristic_design(&geo, k, seed).unwrap());
        let mut hits = vec![0; geo.len()];
        let mut sizes = Vec::new();
        for row in 3..k {
            let support: Vec<usize> = (0..geo.len()).filter(|&l| d.weights[[row, l]] > 0.0).collect();
            prop_assert!(support.iter().all(|&l| !geo.leds[l].is_bright()));
            for &l in &support {
                hits[l] += 1;
            }
            sizes.push(support.len());
        }
        prop_assert!((0..geo.len()).all(|l| geo.leds[l].is_bright() || hits[l] == 1));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn projected_step_stays_feasible(seed in 0u64..1000, lr in 1e-4f64..10.0, k in 3usize..7) {
        let (_, geo, _) = system(9);
        for ctx in [Context::Amplitude, Context::Phase] {
            let mask = context_mask(&geo, k, ctx).unwrap();
            let d = random_design(&mask, ctx, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let g = Array2::from_shape_fn(mask.dim(), |_| rng.sample::<f64, _>(StandardNormal));
            let next = sgd_step(&d, &g, lr).unwrap();
            prop_assert!(next.check_feasible(1e-12).is_ok());
            prop_assert!(next.weights.iter().zip(&mask).all(|(c, m)| *m || *c == 0.0));
        }
    }

    #[test]
    fn loss_ignores_common_global_phase(seed in 0u64..1000, theta in -3.0f64..3.0, gamma in 0.0f64..=1.0) {
        let (cfg, _, _) = system(9);
        let truth = generate_phantom(&cfg, Context::Phase, seed).field;
        let est = generate_phantom(&cfg, Context::Amplitude, seed + 1).field;
        let spec = LossSpec::for_context(Context::Mixed(gamma));
        let rot = |f: &ComplexField| ComplexField::new(f.data.mapv(|v| v * C::from_polar(1.0, theta)), f.pitch_um);
        let a = loss(&est, &truth, &spec).unwrap();
        let b = loss(&rot(&est), &rot(&truth), &spec).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}

#[test]
fn initial_phase_offset_only_shifts_reconstructed_phase() {
    let (cfg, geo, model) = system(21);
    let design = single_led_design(&geo);
    let truth = generate_phantom(&cfg, Context::Amplitude, 3).field;
    let stack = simulate_stack(&truth, &design, &model).unwrap();
    let base = ReconConfig {
        unroll_t: 20,
        ..ReconConfig::default()
    };
    let a = reconstruct(&stack, &design, &model, &base).unwrap();
    let b = reconstruct(
        &stack,
        &design,
        &model,
        &ReconConfig {
            init_phase: 1.3,
            ..base
        },
    )
    .unwrap();
    for (p, q) in a.x_star.data.iter().zip(&b.x_star.data) {
        assert!((p.norm() - q.norm()).abs() <= 1e-8);
        assert!((p * C::from_polar(1.0, 1.3) - q).norm() <= 1e-8);
    }
    assert!(a.cost_history.iter().all(|c| c.is_finite() && *c >= 0.0));
}
