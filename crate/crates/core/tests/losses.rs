//! Loss-term semantics: exact attainment/formula values, independent
//! elementwise oracles, finite-difference gradients, weight linearity, and
//! the documented invariances.

use t2net::losses::{
    feature_gan_losses, lsgan_d_loss, lsgan_g_loss, reconstruction_loss, smoothness_loss,
    task_loss, total_objective, LossReport, LossWeights,
};
use t2net::nets::{DepthPrediction, TaskNetF};
use t2net::tensor::{grad_check, GradCheckOptions, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t64(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, v).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

// ---- LSGAN -----------------------------------------------------------

#[test]
fn lsgan_g_loss_formula_cases() {
    let ones = Tensor::<f32>::full(&[2, 3], 1.0);
    assert_eq!(lsgan_g_loss(&ones).item().unwrap(), 0.0);
    let zeros = Tensor::<f32>::zeros(&[4]);
    assert_eq!(lsgan_g_loss(&zeros).item().unwrap(), 1.0);
    let halves = Tensor::<f32>::full(&[5], 0.5);
    assert_eq!(lsgan_g_loss(&halves).item().unwrap(), 0.25);
}

#[test]
fn lsgan_d_loss_formula_cases() {
    let ones = Tensor::<f32>::full(&[3], 1.0);
    let zeros = Tensor::<f32>::zeros(&[3]);
    let halves = Tensor::<f32>::full(&[3], 0.5);
    // perfect discriminator
    assert_eq!(lsgan_d_loss(&ones, &zeros).unwrap().item().unwrap(), 0.0);
    // exactly inverted
    assert_eq!(lsgan_d_loss(&zeros, &ones).unwrap().item().unwrap(), 2.0);
    // undecided
    assert_eq!(lsgan_d_loss(&halves, &halves).unwrap().item().unwrap(), 0.5);
}

// ---- reconstruction ----------------------------------------------------

#[test]
fn reconstruction_loss_cases_and_oracle() {
    let a = Tensor::<f32>::full(&[2, 2], 0.75);
    assert_eq!(reconstruction_loss(&a, &a).unwrap().item().unwrap(), 0.0);

    let b = Tensor::<f32>::full(&[2, 2], 0.25);
    assert_eq!(reconstruction_loss(&a, &b).unwrap().item().unwrap(), 0.5);

    // random pair against a scripted elementwise oracle
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xv = rand_vec(&mut rng, 24, 0.0, 1.0);
    let yv = rand_vec(&mut rng, 24, 0.0, 1.0);
    let oracle: f64 = xv
        .iter()
        .zip(yv.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / 24.0;
    let got = reconstruction_loss(&t64(&[2, 3, 4], xv), &t64(&[2, 3, 4], yv))
        .unwrap()
        .item()
        .unwrap();
    assert!((got - oracle).abs() < 1e-6);
}

#[test]
fn reconstruction_loss_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = t64(&[3, 5], rand_vec(&mut rng, 15, -1.0, 1.0));
    let b = t64(&[3, 5], rand_vec(&mut rng, 15, -1.0, 1.0));
    let ab = reconstruction_loss(&a, &b).unwrap().item().unwrap();
    let ba = reconstruction_loss(&b, &a).unwrap().item().unwrap();
    assert_eq!(ab, ba);
}

// ---- task loss -----------------------------------------------------------

fn fake_prediction(maps: [Tensor<f64>; 4]) -> DepthPrediction<f64> {
    DepthPrediction {
        depths: maps,
        feature_tap: Tensor::<f64>::zeros(&[1, 64, 4, 4]),
    }
}

#[test]
fn task_loss_zero_when_predictions_equal_pooled_gt() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = t64(&[1, 1, 8, 8], rand_vec(&mut rng, 64, 1.0, 10.0));
    let pooled = |f: usize| {
        let p = gt.avg_pool2d(f).unwrap();
        t64(&p.shape().to_vec(), p.to_vec())
    };
    let pred = fake_prediction([pooled(4), pooled(4), pooled(2), pooled(1)]);
    let loss = task_loss(&pred, &gt).unwrap().item().unwrap();
    assert_eq!(loss, 0.0);
}

#[test]
fn task_loss_constant_offset_is_one() {
    let gt = Tensor::<f64>::full(&[2, 1, 8, 8], 4.0);
    let pred = fake_prediction([
        Tensor::<f64>::full(&[2, 1, 2, 2], 5.0),
        Tensor::<f64>::full(&[2, 1, 2, 2], 5.0),
        Tensor::<f64>::full(&[2, 1, 4, 4], 5.0),
        Tensor::<f64>::full(&[2, 1, 8, 8], 5.0),
    ]);
    let loss = task_loss(&pred, &gt).unwrap().item().unwrap();
    assert_eq!(loss, 1.0);
}

#[test]
fn task_loss_matches_pooling_oracle() {
    // independent oracle: explicit block averaging plus mean-abs, per scale
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt_v = rand_vec(&mut rng, 64, 1.0, 10.0);
    let gt = t64(&[1, 1, 8, 8], gt_v.clone());

    let pool = |v: &[f64], h: usize, w: usize, f: usize| -> Vec<f64> {
        let (oh, ow) = (h / f, w / f);
        let mut out = vec![0.0; oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for di in 0..f {
                    for dj in 0..f {
                        acc += v[(i * f + di) * w + j * f + dj];
                    }
                }
                out[i * ow + j] = acc / (f * f) as f64;
            }
        }
        out
    };

    let p4 = rand_vec(&mut rng, 4, 1.0, 10.0);
    let p4b = rand_vec(&mut rng, 4, 1.0, 10.0);
    let p2 = rand_vec(&mut rng, 16, 1.0, 10.0);
    let p1 = rand_vec(&mut rng, 64, 1.0, 10.0);

    let mean_abs = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    };
    let oracle = (mean_abs(&p4, &pool(&gt_v, 8, 8, 4))
        + mean_abs(&p4b, &pool(&gt_v, 8, 8, 4))
        + mean_abs(&p2, &pool(&gt_v, 8, 8, 2))
        + mean_abs(&p1, &gt_v))
        / 4.0;

    let pred = fake_prediction([
        t64(&[1, 1, 2, 2], p4),
        t64(&[1, 1, 2, 2], p4b),
        t64(&[1, 1, 4, 4], p2),
        t64(&[1, 1, 8, 8], p1),
    ]);
    let got = task_loss(&pred, &gt).unwrap().item().unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

#[test]
fn task_loss_rejects_scale_mismatch() {
    let gt = Tensor::<f64>::full(&[1, 1, 10, 8], 4.0); // 10 not divisible by 4
    let pred = fake_prediction([
        Tensor::<f64>::full(&[1, 1, 3, 2], 5.0),
        Tensor::<f64>::full(&[1, 1, 3, 2], 5.0),
        Tensor::<f64>::full(&[1, 1, 5, 4], 5.0),
        Tensor::<f64>::full(&[1, 1, 10, 8], 5.0),
    ]);
    assert!(task_loss(&pred, &gt).is_err());
}

// ---- smoothness -----------------------------------------------------------

#[test]
fn smoothness_examples_via_module_surface() {
    // constant depth -> 0 regardless of image
    let image = Tensor::<f64>::from_vec(
        &[1, 3, 4, 4],
        (0..48).map(|v| v as f64 / 48.0).collect(),
    )
    .unwrap();
    let flat = fake_prediction([
        Tensor::<f64>::full(&[1, 1, 1, 1], 3.0),
        Tensor::<f64>::full(&[1, 1, 1, 1], 3.0),
        Tensor::<f64>::full(&[1, 1, 2, 2], 3.0),
        Tensor::<f64>::full(&[1, 1, 4, 4], 3.0),
    ]);
    assert_eq!(smoothness_loss(&flat, &image).unwrap().item().unwrap(), 0.0);

    // unit x-ramp against a constant image -> exactly 1
    let mut ramp = vec![0.0f64; 16];
    for i in 0..4 {
        for j in 0..4 {
            ramp[i * 4 + j] = j as f64;
        }
    }
    let rampy = fake_prediction([
        Tensor::<f64>::full(&[1, 1, 1, 1], 0.0),
        Tensor::<f64>::full(&[1, 1, 1, 1], 0.0),
        Tensor::<f64>::full(&[1, 1, 2, 2], 0.0),
        t64(&[1, 1, 4, 4], ramp),
    ]);
    let constant_image = Tensor::<f64>::full(&[1, 3, 4, 4], 0.5);
    let loss = smoothness_loss(&rampy, &constant_image).unwrap().item().unwrap();
    assert!((loss - 1.0).abs() < 1e-12);
}

#[test]
fn smoothness_matches_elementwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, w) = (5usize, 6usize);
    let dv = rand_vec(&mut rng, h * w, 1.0, 10.0);
    let iv = rand_vec(&mut rng, 3 * h * w, 0.0, 1.0);

    // scripted oracle, written straight from the definition
    let mut sum_x = 0.0;
    for i in 0..h {
        for j in 0..w - 1 {
            let dd = (dv[i * w + j + 1] - dv[i * w + j]).abs();
            let gi: f64 = (0..3)
                .map(|c| (iv[c * h * w + i * w + j + 1] - iv[c * h * w + i * w + j]).abs())
                .sum::<f64>()
                / 3.0;
            sum_x += dd * (-gi).exp();
        }
    }
    let mut sum_y = 0.0;
    for i in 0..h - 1 {
        for j in 0..w {
            let dd = (dv[(i + 1) * w + j] - dv[i * w + j]).abs();
            let gi: f64 = (0..3)
                .map(|c| (iv[c * h * w + (i + 1) * w + j] - iv[c * h * w + i * w + j]).abs())
                .sum::<f64>()
                / 3.0;
            sum_y += dd * (-gi).exp();
        }
    }
    let oracle = sum_x / (h * (w - 1)) as f64 + sum_y / ((h - 1) * w) as f64;

    let got = t2net::tensor::smoothness_loss(&t64(&[1, 1, h, w], dv), &t64(&[1, 3, h, w], iv))
        .unwrap()
        .item()
        .unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

// ---- feature GAN ----------------------------------------------------------

#[test]
fn feature_gan_equals_lsgan_on_feature_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s_trans = t64(&[2, 1, 3, 3], rand_vec(&mut rng, 18, -1.0, 2.0));
    let s_real = t64(&[2, 1, 3, 3], rand_vec(&mut rng, 18, -1.0, 2.0));
    let (g_side, d_side) = feature_gan_losses(&s_trans, &s_real, false).unwrap();
    // delegate-to-same-oracle: identical to the image-level combinators
    // with translated scores in the target-1 slot
    let d_ref = lsgan_d_loss(&s_trans, &s_real).unwrap();
    let g_ref = lsgan_g_loss(&s_real);
    assert_eq!(d_side.item().unwrap(), d_ref.item().unwrap());
    assert_eq!(g_side.item().unwrap(), g_ref.item().unwrap());

    // mirrored assignment swaps the roles
    let (g_m, d_m) = feature_gan_losses(&s_trans, &s_real, true).unwrap();
    assert_eq!(
        d_m.item().unwrap(),
        lsgan_d_loss(&s_real, &s_trans).unwrap().item().unwrap()
    );
    assert_eq!(g_m.item().unwrap(), lsgan_g_loss(&s_trans).item().unwrap());
}

#[test]
fn feature_gan_attainment_cases() {
    let ones = Tensor::<f32>::full(&[4], 1.0);
    let zeros = Tensor::<f32>::zeros(&[4]);
    // perfect discriminator: translated scored 1, real scored 0
    let (_, d_side) = feature_gan_losses(&ones, &zeros, false).unwrap();
    assert_eq!(d_side.item().unwrap(), 0.0);
    // undecided at 0.5
    let halves = Tensor::<f32>::full(&[4], 0.5);
    let (g_side, d_side) = feature_gan_losses(&halves, &halves, false).unwrap();
    assert_eq!(d_side.item().unwrap(), 0.5);
    assert_eq!(g_side.item().unwrap(), 0.25);
}

// ---- total objective ------------------------------------------------------

#[test]
fn total_objective_indoor_weights_unit_components() {
    let report = LossReport {
        gan_g: 1.0,
        gan_feat_g: 1.0,
        recon: 1.0,
        task: 1.0,
        smooth: 1.0,
        ..Default::default()
    };
    let total = total_objective(report, &LossWeights::indoor());
    assert!((total.total_g_side - 61.11).abs() < 1e-12);
}

#[test]
fn total_objective_zero_components() {
    let total = total_objective(LossReport::default(), &LossWeights::indoor());
    assert_eq!(total.total_g_side, 0.0);
}

#[test]
fn total_objective_matches_weighted_sum_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let report = LossReport {
            gan_g: rng.gen_range(0.0..2.0),
            gan_feat_g: rng.gen_range(0.0..2.0),
            recon: rng.gen_range(0.0..1.0),
            task: rng.gen_range(0.0..5.0),
            smooth: rng.gen_range(0.0..1.0),
            ..Default::default()
        };
        let w = LossWeights {
            alpha_f: rng.gen_range(0.0..1.0),
            alpha_r: rng.gen_range(0.0..100.0),
            alpha_t: rng.gen_range(0.0..100.0),
            alpha_s: rng.gen_range(0.0..1.0),
        };
        let oracle = report.gan_g
            + w.alpha_f * report.gan_feat_g
            + w.alpha_r * report.recon
            + w.alpha_t * report.task
            + w.alpha_s * report.smooth;
        assert_eq!(total_objective(report, &w).total_g_side, oracle);
    }
}

#[test]
fn outdoor_profile_values() {
    let w = LossWeights::outdoor();
    assert_eq!((w.alpha_f, w.alpha_r, w.alpha_t, w.alpha_s), (0.1, 100.0, 100.0, 0.01));
    let d = LossWeights::default();
    assert_eq!((d.alpha_f, d.alpha_r, d.alpha_t, d.alpha_s), (0.1, 40.0, 20.0, 0.01));
}

// ---- shared properties -----------------------------------------------------

#[test]
fn losses_are_nonnegative_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let s = t64(&[1, 1, 4, 4], rand_vec(&mut rng, 16, -2.0, 2.0));
        let t = t64(&[1, 1, 4, 4], rand_vec(&mut rng, 16, -2.0, 2.0));
        assert!(lsgan_g_loss(&s).item().unwrap() >= 0.0);
        assert!(lsgan_d_loss(&s, &t).unwrap().item().unwrap() >= 0.0);
        assert!(reconstruction_loss(&s, &t).unwrap().item().unwrap() >= 0.0);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let opts = GradCheckOptions::f64_defaults();

    // LSGAN generator side
    let scores = Tensor::<f64>::param(&[2, 1, 3, 3], rand_vec(&mut rng, 18, -1.0, 2.0)).unwrap();
    let params = [("scores".to_string(), scores.clone())];
    let mut fwd = || lsgan_g_loss(&scores);
    let out = grad_check(&params, &mut fwd, &|_, _| false, &opts).unwrap();
    assert!(out.passes(1e-6), "lsgan_g rel err {}", out.max_rel_err);

    // reconstruction away from ties
    let a = Tensor::<f64>::param(&[3, 4], rand_vec(&mut rng, 12, 0.0, 1.0)).unwrap();
    let b = t64(&[3, 4], rand_vec(&mut rng, 12, 0.0, 1.0));
    let params = [("a".to_string(), a.clone())];
    let mut fwd = || reconstruction_loss(&a, &b).unwrap();
    let out = grad_check(&params, &mut fwd, &|_, _| false, &opts).unwrap();
    assert!(out.passes(1e-6), "recon rel err {}", out.max_rel_err);

    // multi-scale task loss through a real task net (all four heads)
    let net = TaskNetF::<f64>::new(11, 1.0, 10.0);
    let image = t64(&[1, 3, 8, 8], rand_vec(&mut rng, 192, 0.0, 1.0));
    let gt = t64(&[1, 1, 8, 8], rand_vec(&mut rng, 64, 1.0, 10.0));
    let params: Vec<(String, Tensor<f64>)> = net
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let opts_sub = GradCheckOptions {
        max_entries_per_param: 2,
        ..opts.clone()
    };
    let mut fwd = || {
        let pred = net.predict_depth(&image).unwrap();
        task_loss(&pred, &gt).unwrap()
    };
    let out = grad_check(&params, &mut fwd, &|_, _| false, &opts_sub).unwrap();
    assert!(out.passes(1e-3), "task rel err {}", out.max_rel_err);
}

#[test]
fn weight_scaling_scales_gradient_contribution_linearly() {
    // doubling alpha_t must exactly double the task term's gradient
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xv = rand_vec(&mut rng, 12, 1.0, 9.0);
    let gv = rand_vec(&mut rng, 12, 1.0, 9.0);

    let grad_with_alpha = |alpha: f64| -> Vec<f64> {
        let x = Tensor::<f64>::param(&[3, 4], xv.clone()).unwrap();
        let g = t64(&[3, 4], gv.clone());
        let loss = t2net::tensor::l1_loss(&x, &g).unwrap().mul_scalar(alpha);
        loss.backward().unwrap();
        x.grad().unwrap()
    };
    let g1 = grad_with_alpha(1.5);
    let g2 = grad_with_alpha(3.0);
    for (a, b) in g1.iter().zip(g2.iter()) {
        assert!((2.0 * a - b).abs() < 1e-15, "{a} vs {b}");
    }
}
