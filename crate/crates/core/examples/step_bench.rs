//! Rough cost of the training-step building blocks at the default 64x64 /
//! batch-4 configuration.

use std::time::Instant;
use t2net::nets::{DiscriminatorFeat, DiscriminatorR, TaskNetF, TranslatorG};
use t2net::tensor::{l1_loss, no_grad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn time<R>(label: &str, iters: usize, mut f: impl FnMut() -> R) {
    let start = Instant::now();
    for _ in 0..iters {
        std::hint::black_box(f());
    }
    let dt = start.elapsed();
    println!("{label}: {:.0} ms/iter", dt.as_secs_f64() * 1000.0 / iters as f64);
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = |rng: &mut ChaCha8Rng| {
        let data: Vec<f32> = (0..4 * 3 * 64 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::<f32>::from_vec(&[4, 3, 64, 64], data).unwrap()
    };
    let g = TranslatorG::<f32>::new(1);
    let dr = DiscriminatorR::<f32>::new(2);
    let df = DiscriminatorFeat::<f32>::new(3);
    let ft = TaskNetF::<f32>::new(4, 1.0, 10.0);

    let syn = batch(&mut rng);
    let real = batch(&mut rng);
    let gt: Vec<f32> = (0..4 * 64 * 64).map(|_| rng.gen_range(1.0..10.0)).collect();
    let gt = Tensor::<f32>::from_vec(&[4, 1, 64, 64], gt).unwrap();

    {
        let _ng = no_grad();
        time("G fwd (no grad)", 10, || g.translate(&syn).unwrap());
        time("fT fwd (no grad)", 10, || ft.predict_depth(&syn).unwrap());
        time("DR fwd (no grad)", 10, || dr.discriminate(&syn).unwrap());
    }
    time("G fwd (tracked)", 10, || g.translate(&syn).unwrap());
    time("G fwd+bwd", 10, || {
        let y = g.translate(&syn).unwrap();
        let l = y.square().mean();
        l.backward().unwrap();
        g.params().zero_grads();
    });
    time("fT fwd+bwd", 10, || {
        let p = ft.predict_depth(&syn).unwrap();
        let l = l1_loss(&p.depths[3], &gt).unwrap();
        l.backward().unwrap();
        ft.params().zero_grads();
    });
    #[cfg(feature = "timing")]
    println!("timing before full-step block: {}", t2net::tensor::timing::report_and_reset());
    time("full step", 20, || {
        let fake = g.translate(&syn).unwrap();
        let recon = g.translate(&real).unwrap();
        let pred_s = ft.predict_depth(&fake).unwrap();
        let pred_r = ft.predict_depth(&real).unwrap();
        let s_fake = dr.discriminate(&fake).unwrap();
        let s_feat = df.discriminate(&pred_r.feature_tap).unwrap();

        let gan_g = s_fake.add_scalar(-1.0).square().mean();
        let recon_l = l1_loss(&recon, &real).unwrap();
        let task_l = l1_loss(&pred_s.depths[3], &gt).unwrap();
        let feat_g = s_feat.add_scalar(-1.0).square().mean();
        let smooth = t2net::tensor::smoothness_loss(&pred_r.depths[3], &real).unwrap();

        let total = gan_g
            .add(&feat_g.mul_scalar(0.1)).unwrap()
            .add(&recon_l.mul_scalar(40.0)).unwrap()
            .add(&task_l.mul_scalar(20.0)).unwrap()
            .add(&smooth.mul_scalar(0.01)).unwrap();
        total.backward().unwrap();

        let fake_d = fake.detach();
        let s_real = dr.discriminate(&real).unwrap();
        let s_fake_d = dr.discriminate(&fake_d).unwrap();
        let d_loss = s_real.add_scalar(-1.0).square().mean().add(&s_fake_d.square().mean()).unwrap();
        let tap_s = pred_s.feature_tap.detach();
        let tap_r = pred_r.feature_tap.detach();
        let sf_s = df.discriminate(&tap_s).unwrap();
        let sf_r = df.discriminate(&tap_r).unwrap();
        let df_loss = sf_s.add_scalar(-1.0).square().mean().add(&sf_r.square().mean()).unwrap();
        d_loss.add(&df_loss).unwrap().backward().unwrap();

        g.params().zero_grads();
        ft.params().zero_grads();
        dr.params().zero_grads();
        df.params().zero_grads();
    });
    #[cfg(feature = "timing")]
    println!("timing: {}", t2net::tensor::timing::report_and_reset());
}

// With `--features timing`, per-kernel totals for the last block:
// (the report drains the counters)
#[cfg(feature = "timing")]
fn _unused() {}
