//! Packaged gradient-check suites: per-operation sweeps in both precisions
//! and the end-to-end composite objective over all four networks. The CLI
//! command and the acceptance tests both run exactly these.

use crate::losses::{
    feature_gan_losses, lsgan_d_loss, lsgan_g_loss, reconstruction_loss, smoothness_loss,
    task_loss, LossWeights,
};
use crate::nets::{DiscriminatorFeat, DiscriminatorR, TaskNetF, TranslatorG};
use crate::tensor::{grad_check, Elem, GradCheckOptions, GradCheckOutcome, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SuiteOutcome {
    pub name: String,
    pub outcome: GradCheckOutcome,
    pub tolerance: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.outcome.max_rel_err < self.tolerance && self.outcome.checked > 0
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} max rel err {:.3e} (tol {:.0e}, {} checked, {} excluded)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.outcome.max_rel_err,
            self.tolerance,
            self.outcome.checked,
            self.outcome.excluded,
        )
    }
}

fn rand_vec<E: Elem>(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<E> {
    (0..n).map(|_| E::from_f64(rng.gen_range(lo..hi))).collect()
}

struct OpCase<E: Elem> {
    name: &'static str,
    params: Vec<(String, Tensor<E>)>,
    forward: Box<dyn FnMut() -> Tensor<E>>,
    exclude: Box<dyn Fn(&str, usize) -> bool>,
    /// Per-case step multiplier: curvature-heavy ops need a smaller step
    /// (truncation), quadratic ops tolerate a larger one (rounding).
    eps_scale: f64,
}

/// One randomized instance per differentiable operation. Losses are kept
/// O(1) with O(0.1..1) gradients so the difference quotient is resolvable
/// at both precisions.
fn build_op_cases<E: Elem>(rng: &mut ChaCha8Rng, kink_eps: f64) -> Vec<OpCase<E>> {
    let mut cases: Vec<OpCase<E>> = Vec::new();

    // conv2d across stride/padding/dilation settings
    for (name, stride, padding, dilation) in [
        ("conv2d_s1", 1usize, 1usize, 1usize),
        ("conv2d_s2", 2, 1, 1),
        ("conv2d_dilated", 1, 2, 2),
    ] {
        let input = Tensor::<E>::from_vec(&[2, 2, 6, 6], rand_vec(rng, 144, -1.0, 1.0)).unwrap();
        let kernel = Tensor::<E>::param(&[2, 2, 3, 3], rand_vec(rng, 36, -0.5, 0.5)).unwrap();
        let bias = Tensor::<E>::param(&[2], rand_vec(rng, 2, -0.2, 0.2)).unwrap();
        let params = vec![
            ("kernel".to_string(), kernel.clone()),
            ("bias".to_string(), bias.clone()),
        ];
        cases.push(OpCase {
            name,
            params,
            forward: Box::new(move || {
                let y = input.conv2d(&kernel, &bias, stride, padding, dilation).unwrap();
                y.square().sum().mul_scalar(E::from_f64(0.05))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // conv2d gradient w.r.t. a tracked input
    {
        let input = Tensor::<E>::param(&[1, 2, 5, 5], rand_vec(rng, 50, -1.0, 1.0)).unwrap();
        let kernel = Tensor::<E>::from_vec(&[2, 2, 3, 3], rand_vec(rng, 36, -0.5, 0.5)).unwrap();
        let bias = Tensor::<E>::zeros(&[2]);
        let params = vec![("input".to_string(), input.clone())];
        cases.push(OpCase {
            name: "conv2d_input",
            params,
            forward: Box::new(move || {
                let y = input.conv2d(&kernel, &bias, 1, 1, 1).unwrap();
                y.square().sum().mul_scalar(E::from_f64(0.05))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // upsample + pool
    {
        let x = Tensor::<E>::param(&[1, 2, 4, 4], rand_vec(rng, 32, -1.0, 1.0)).unwrap();
        let params = vec![("x".to_string(), x.clone())];
        cases.push(OpCase {
            name: "upsample2x_avg_pool2d",
            params,
            forward: Box::new(move || {
                let y = x.upsample2x().unwrap().avg_pool2d(4).unwrap();
                y.square().sum().mul_scalar(E::from_f64(0.5))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // plain elementwise chains
    {
        let x = Tensor::<E>::param(&[3, 4], rand_vec(rng, 12, -1.5, 1.5)).unwrap();
        let params = vec![("x".to_string(), x.clone())];
        cases.push(OpCase {
            name: "tanh_sigmoid_exp",
            params,
            forward: Box::new(move || {
                let a = x.tanh().exp();
                let b = x.sigmoid();
                a.mul(&b).unwrap().sum().mul_scalar(E::from_f64(0.5))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // kinked elementwise with masks
    {
        let x = Tensor::<E>::param(&[3, 4], rand_vec(rng, 12, -1.5, 1.5)).unwrap();
        let xv: Vec<f64> = x.to_vec().iter().map(|v| v.to_f64()).collect();
        let params = vec![("x".to_string(), x.clone())];
        let mask_eps = 2.0 * kink_eps;
        cases.push(OpCase {
            name: "relu_leaky_abs",
            params,
            forward: Box::new(move || {
                let a = x.relu();
                let b = x.leaky_relu(E::from_f64(0.2));
                let c = x.abs();
                a.add(&b).unwrap().add(&c).unwrap().sum()
            }),
            exclude: Box::new(move |_, i| xv[i].abs() < mask_eps),
            eps_scale: 1.0,
        });
    }

    // strict log on positive inputs
    {
        let x = Tensor::<E>::param(&[8], rand_vec(rng, 8, 0.5, 3.0)).unwrap();
        let params = vec![("x".to_string(), x.clone())];
        cases.push(OpCase {
            name: "log",
            params,
            forward: Box::new(move || x.log().unwrap().sum()),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // binary ops and scalar ops
    {
        let a = Tensor::<E>::param(&[2, 5], rand_vec(rng, 10, -1.0, 1.0)).unwrap();
        let b = Tensor::<E>::param(&[2, 5], rand_vec(rng, 10, -1.0, 1.0)).unwrap();
        let params = vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())];
        cases.push(OpCase {
            name: "add_sub_mul_scalar",
            params,
            forward: Box::new(move || {
                let s = a.mul(&b).unwrap().add_scalar(E::from_f64(0.3));
                let t = a.sub(&b).unwrap().mul_scalar(E::from_f64(0.7));
                s.add(&t).unwrap().sum()
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // mean reduce
    {
        let x = Tensor::<E>::param(&[4, 4], rand_vec(rng, 16, -2.0, 2.0)).unwrap();
        let params = vec![("x".to_string(), x.clone())];
        cases.push(OpCase {
            name: "mean_reduce",
            params,
            forward: Box::new(move || x.square().mean().mul_scalar(E::from_f64(4.0))),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // l1 with tie masking
    {
        let a = Tensor::<E>::param(&[3, 4], rand_vec(rng, 12, 0.0, 1.0)).unwrap();
        let b = Tensor::<E>::from_vec(&[3, 4], rand_vec(rng, 12, 0.0, 1.0)).unwrap();
        let diffs: Vec<f64> = a
            .to_vec()
            .iter()
            .zip(b.to_vec().iter())
            .map(|(x, y)| (x.to_f64() - y.to_f64()).abs())
            .collect();
        let params = vec![("a".to_string(), a.clone())];
        let mask_eps = 2.0 * kink_eps;
        cases.push(OpCase {
            name: "l1_loss",
            params,
            forward: Box::new(move || {
                crate::tensor::l1_loss(&a, &b).unwrap().mul_scalar(E::from_f64(12.0))
            }),
            exclude: Box::new(move |_, i| diffs[i] < mask_eps),
            eps_scale: 1.0,
        });
    }

    // instance norm through a fixed projection
    {
        let x = Tensor::<E>::param(&[1, 2, 3, 4], rand_vec(rng, 24, -1.0, 1.0)).unwrap();
        let gain = Tensor::<E>::param(&[2], rand_vec(rng, 2, 0.8, 1.2)).unwrap();
        let shift = Tensor::<E>::param(&[2], rand_vec(rng, 2, -0.2, 0.2)).unwrap();
        let proj = Tensor::<E>::from_vec(&[1, 2, 3, 4], rand_vec(rng, 24, -1.0, 1.0)).unwrap();
        let params = vec![
            ("x".to_string(), x.clone()),
            ("gain".to_string(), gain.clone()),
            ("shift".to_string(), shift.clone()),
        ];
        cases.push(OpCase {
            name: "instance_norm",
            params,
            forward: Box::new(move || {
                let y = x.instance_norm(&gain, &shift).unwrap();
                let p = y.mul(&proj).unwrap();
                p.sum().add(&p.square().sum()).unwrap().mul_scalar(E::from_f64(0.5))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 0.25,
        });
    }

    // smoothness w.r.t. the depth argument
    {
        let depth = Tensor::<E>::param(&[1, 1, 4, 5], rand_vec(rng, 20, 1.0, 9.0)).unwrap();
        let image = Tensor::<E>::from_vec(&[1, 3, 4, 5], rand_vec(rng, 60, 0.0, 1.0)).unwrap();
        let params = vec![("depth".to_string(), depth.clone())];
        cases.push(OpCase {
            name: "smoothness",
            params,
            forward: Box::new(move || {
                crate::tensor::smoothness_loss(&depth, &image)
                    .unwrap()
                    .mul_scalar(E::from_f64(5.0))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    // LSGAN combinators
    {
        let real = Tensor::<E>::param(&[2, 1, 3, 3], rand_vec(rng, 18, -0.5, 1.5)).unwrap();
        let fake = Tensor::<E>::param(&[2, 1, 3, 3], rand_vec(rng, 18, -0.5, 1.5)).unwrap();
        let params = vec![
            ("real".to_string(), real.clone()),
            ("fake".to_string(), fake.clone()),
        ];
        cases.push(OpCase {
            name: "lsgan",
            params,
            forward: Box::new(move || {
                let d = lsgan_d_loss(&real, &fake).unwrap();
                let g = lsgan_g_loss(&fake);
                d.add(&g).unwrap().mul_scalar(E::from_f64(3.0))
            }),
            exclude: Box::new(|_, _| false),
            eps_scale: 1.0,
        });
    }

    cases
}

/// Run the per-op sweep at one precision. `trials` draws independent
/// random instances of every case.
pub fn per_op_suite<E: Elem>(
    trials: usize,
    seed: u64,
    opts: &GradCheckOptions,
    tolerance: f64,
) -> Vec<SuiteOutcome> {
    let mut results: Vec<SuiteOutcome> = Vec::new();
    for trial in 0..trials.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37));
        for mut case in build_op_cases::<E>(&mut rng, opts.eps) {
            let case_opts = GradCheckOptions {
                eps: opts.eps * case.eps_scale,
                ..opts.clone()
            };
            let outcome = grad_check(&case.params, &mut case.forward, &case.exclude, &case_opts)
                .expect("suite forward must be scalar");
            let name = if trials > 1 {
                format!("{}#{trial}", case.name)
            } else {
                case.name.to_string()
            };
            results.push(SuiteOutcome {
                name,
                outcome,
                tolerance,
            });
        }
    }
    results
}

/// Shared fixture for the composite checks: the four networks plus a
/// 2-sample batch per pipeline. Built identically for either precision.
struct E2eSetup<E: Elem> {
    g: TranslatorG<E>,
    dr: DiscriminatorR<E>,
    df: DiscriminatorFeat<E>,
    ft: TaskNetF<E>,
    x_s: Tensor<E>,
    x_r: Tensor<E>,
    y_s: Tensor<E>,
    weights: LossWeights,
}

fn build_setup<E: Elem>(seed: u64) -> E2eSetup<E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = TranslatorG::<E>::new(rng.gen());
    let dr = DiscriminatorR::<E>::new(rng.gen());
    let df = DiscriminatorFeat::<E>::new(rng.gen());
    let ft = TaskNetF::<E>::new(rng.gen(), 1.0, 10.0);
    let x_s = Tensor::<E>::from_vec(&[2, 3, 16, 16], rand_vec(&mut rng, 1536, 0.0, 1.0)).unwrap();
    let x_r = Tensor::<E>::from_vec(&[2, 3, 16, 16], rand_vec(&mut rng, 1536, 0.0, 1.0)).unwrap();
    let y_s = Tensor::<E>::from_vec(&[2, 1, 16, 16], rand_vec(&mut rng, 512, 1.0, 10.0)).unwrap();
    E2eSetup {
        g,
        dr,
        df,
        ft,
        x_s,
        x_r,
        y_s,
        weights: LossWeights::indoor(),
    }
}

/// Overwrite `dst` parameters and inputs with `src` values (cast), so both
/// precisions describe the same point in parameter space.
fn sync_setup<S: Elem, D: Elem>(src: &E2eSetup<S>, dst: &E2eSetup<D>) {
    let pairs = [
        (src.g.params(), dst.g.params()),
        (src.dr.params(), dst.dr.params()),
        (src.df.params(), dst.df.params()),
        (src.ft.params(), dst.ft.params()),
    ];
    for (sp, dp) in pairs {
        for ((sn, st), (dn, dt)) in sp.iter().zip(dp.iter()) {
            assert_eq!(sn, dn);
            let cast: Vec<D> = st.data().iter().map(|v| D::from_f64(v.to_f64())).collect();
            dt.set_data(&cast).unwrap();
        }
    }
    for (st, dt) in [(&src.x_s, &dst.x_s), (&src.x_r, &dst.x_r), (&src.y_s, &dst.y_s)] {
        let cast: Vec<D> = st.data().iter().map(|v| D::from_f64(v.to_f64())).collect();
        dt.set_data(&cast).unwrap();
    }
}

fn generator_side_loss<E: Elem>(s: &E2eSetup<E>) -> Tensor<E> {
    let fake = s.g.translate(&s.x_s).unwrap();
    let recon_out = s.g.translate(&s.x_r).unwrap();
    let pred_s = s.ft.predict_depth(&fake).unwrap();
    let pred_r = s.ft.predict_depth(&s.x_r).unwrap();
    let gan_g = lsgan_g_loss(&s.dr.discriminate(&fake).unwrap());
    let feat_g = lsgan_g_loss(&s.df.discriminate(&pred_r.feature_tap).unwrap());
    let recon = reconstruction_loss(&recon_out, &s.x_r).unwrap();
    let task = task_loss(&pred_s, &s.y_s).unwrap();
    let smooth = smoothness_loss(&pred_r, &s.x_r).unwrap();
    gan_g
        .add(&feat_g.mul_scalar(E::from_f64(s.weights.alpha_f)))
        .unwrap()
        .add(&recon.mul_scalar(E::from_f64(s.weights.alpha_r)))
        .unwrap()
        .add(&task.mul_scalar(E::from_f64(s.weights.alpha_t)))
        .unwrap()
        .add(&smooth.mul_scalar(E::from_f64(s.weights.alpha_s)))
        .unwrap()
}

fn detached_generator_outputs<E: Elem>(s: &E2eSetup<E>) -> (Tensor<E>, Tensor<E>, Tensor<E>) {
    let guard = crate::tensor::no_grad();
    let fake = s.g.translate(&s.x_s).unwrap();
    let tap_s = s.ft.predict_depth(&fake).unwrap().feature_tap;
    let tap_r = s.ft.predict_depth(&s.x_r).unwrap().feature_tap;
    drop(guard);
    (fake, tap_s, tap_r)
}

fn named_params<E: Elem>(prefix: &str, set: &crate::tensor::ParamSet<E>) -> Vec<(String, Tensor<E>)> {
    set.iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t.clone()))
        .collect()
}

/// Composite-objective checks over every network in one precision: the
/// generator-side total w.r.t. G and task-net parameters, and both
/// discriminator losses w.r.t. their own parameters.
pub fn end_to_end_suite<E: Elem>(
    seed: u64,
    opts: &GradCheckOptions,
    tolerance: f64,
    entries_per_param: usize,
) -> Vec<SuiteOutcome> {
    let setup = build_setup::<E>(seed);
    let opts = GradCheckOptions {
        max_entries_per_param: entries_per_param,
        seed,
        ..opts.clone()
    };
    let mut results = Vec::new();

    {
        let mut params = named_params("G", setup.g.params());
        params.extend(named_params("fT", setup.ft.params()));
        let sref = &setup;
        let mut forward = move || generator_side_loss(sref);
        let outcome = grad_check(&params, &mut forward, &|_, _| false, &opts)
            .expect("composite loss is scalar");
        results.push(SuiteOutcome {
            name: "objective_vs_G_and_fT".into(),
            outcome,
            tolerance,
        });
    }
    {
        let (fake, _, _) = detached_generator_outputs(&setup);
        let params = named_params("DR", setup.dr.params());
        let (drr, xr, fk) = (&setup.dr, &setup.x_r, &fake);
        let mut forward = move || {
            lsgan_d_loss(&drr.discriminate(xr).unwrap(), &drr.discriminate(fk).unwrap()).unwrap()
        };
        let outcome = grad_check(&params, &mut forward, &|_, _| false, &opts)
            .expect("discriminator loss is scalar");
        results.push(SuiteOutcome {
            name: "image_gan_vs_DR".into(),
            outcome,
            tolerance,
        });
    }
    {
        let (_, tap_s, tap_r) = detached_generator_outputs(&setup);
        let params = named_params("Dfeat", setup.df.params());
        let (dfr, ts, tr) = (&setup.df, &tap_s, &tap_r);
        let mut forward = move || {
            let (_, d_side) = feature_gan_losses(
                &dfr.discriminate(ts).unwrap(),
                &dfr.discriminate(tr).unwrap(),
                false,
            )
            .unwrap();
            d_side
        };
        let outcome = grad_check(&params, &mut forward, &|_, _| false, &opts)
            .expect("feature discriminator loss is scalar");
        results.push(SuiteOutcome {
            name: "feature_gan_vs_Dfeat".into(),
            outcome,
            tolerance,
        });
    }
    results
}

/// Cross-precision composite check: gradients computed by the f32 engine
/// are compared against difference quotients of an f64 twin evaluated at
/// the identical parameter point, so the probe carries no f32 rounding
/// noise. Verifies the training-precision backward end to end.
pub fn end_to_end_cross_precision(
    seed: u64,
    tolerance: f64,
    entries_per_param: usize,
) -> Vec<SuiteOutcome> {
    use crate::tensor::check_against_reference;

    let s32 = build_setup::<f32>(seed);
    let s64 = build_setup::<f64>(seed);
    sync_setup(&s32, &s64);

    let opts = GradCheckOptions {
        eps: 1.5e-6,
        max_entries_per_param: entries_per_param,
        seed,
        abs_floor: 1e-10,
        // f32 reverse-mode gradients themselves carry ~1e-4 relative
        // accumulation noise; below this magnitude a 1e-2 comparison
        // against the exact gradient is not meaningful.
        min_grad: 3e-3,
        kink_filter: true,
    };

    let analytic_for = |params32: &[(String, Tensor<f32>)], loss: Tensor<f32>| -> Vec<Vec<f64>> {
        for (_, p) in params32 {
            p.zero_grad();
        }
        loss.backward().unwrap();
        params32
            .iter()
            .map(|(_, p)| {
                p.grad()
                    .map(|g| g.iter().map(|v| *v as f64).collect())
                    .unwrap_or_else(|| vec![0.0; p.numel()])
            })
            .collect()
    };

    let mut results = Vec::new();

    {
        let mut params32 = named_params("G", s32.g.params());
        params32.extend(named_params("fT", s32.ft.params()));
        let analytic = analytic_for(&params32, generator_side_loss(&s32));
        let mut params64 = named_params("G", s64.g.params());
        params64.extend(named_params("fT", s64.ft.params()));
        let sref = &s64;
        let mut forward = move || generator_side_loss(sref);
        let outcome =
            check_against_reference(&params64, &mut forward, &analytic, &|_, _| false, &opts)
                .expect("composite loss is scalar");
        results.push(SuiteOutcome {
            name: "objective_vs_G_and_fT".into(),
            outcome,
            tolerance,
        });
    }
    {
        let (fake32, _, _) = detached_generator_outputs(&s32);
        let params32 = named_params("DR", s32.dr.params());
        let loss32 = lsgan_d_loss(
            &s32.dr.discriminate(&s32.x_r).unwrap(),
            &s32.dr.discriminate(&fake32).unwrap(),
        )
        .unwrap();
        let analytic = analytic_for(&params32, loss32);

        let fake64 = fake32.cast::<f64>();
        let params64 = named_params("DR", s64.dr.params());
        let (drr, xr) = (&s64.dr, &s64.x_r);
        let fk = &fake64;
        let mut forward = move || {
            lsgan_d_loss(&drr.discriminate(xr).unwrap(), &drr.discriminate(fk).unwrap()).unwrap()
        };
        let outcome =
            check_against_reference(&params64, &mut forward, &analytic, &|_, _| false, &opts)
                .expect("discriminator loss is scalar");
        results.push(SuiteOutcome {
            name: "image_gan_vs_DR".into(),
            outcome,
            tolerance,
        });
    }
    {
        let (_, tap_s32, tap_r32) = detached_generator_outputs(&s32);
        let params32 = named_params("Dfeat", s32.df.params());
        let (_, d32) = feature_gan_losses(
            &s32.df.discriminate(&tap_s32).unwrap(),
            &s32.df.discriminate(&tap_r32).unwrap(),
            false,
        )
        .unwrap();
        let analytic = analytic_for(&params32, d32);

        let ts = tap_s32.cast::<f64>();
        let tr = tap_r32.cast::<f64>();
        let params64 = named_params("Dfeat", s64.df.params());
        let dfr = &s64.df;
        let (tsr, trr) = (&ts, &tr);
        let mut forward = move || {
            let (_, d_side) = feature_gan_losses(
                &dfr.discriminate(tsr).unwrap(),
                &dfr.discriminate(trr).unwrap(),
                false,
            )
            .unwrap();
            d_side
        };
        let outcome =
            check_against_reference(&params64, &mut forward, &analytic, &|_, _| false, &opts)
                .expect("feature discriminator loss is scalar");
        results.push(SuiteOutcome {
            name: "feature_gan_vs_Dfeat".into(),
            outcome,
            tolerance,
        });
    }
    results
}

/// Standard per-op run: f32 at the training precision, f64 in check mode.
pub fn run_per_op(trials: usize, seed: u64) -> Vec<SuiteOutcome> {
    let mut all = per_op_suite::<f32>(trials, seed, &GradCheckOptions::f32_defaults(), 1e-3);
    for o in &mut all {
        o.name = format!("f32 {}", o.name);
    }
    let mut f64_suite = per_op_suite::<f64>(trials, seed, &GradCheckOptions::f64_defaults(), 1e-6);
    for o in &mut f64_suite {
        o.name = format!("f64 {}", o.name);
    }
    all.extend(f64_suite);
    all
}

/// Standard end-to-end run. The f32 ("training precision") pass verifies
/// the f32 engine's gradients against an f64 twin of the same point; the
/// f64 pass verifies the check-mode engine against its own quotients at
/// the tight tolerance.
pub fn run_end_to_end(seed: u64) -> Vec<SuiteOutcome> {
    // f32 mode: f32 gradients against the f64-twin probe at 1e-2
    let mut all = end_to_end_cross_precision(seed, 1e-2, 1);
    for o in &mut all {
        o.name = format!("f32 {}", o.name);
    }
    // f64 check mode: pure f64 at 1e-4
    let f64_opts = GradCheckOptions {
        eps: 1.5e-6,
        min_grad: 3e-4,
        kink_filter: true,
        ..GradCheckOptions::f64_defaults()
    };
    let mut f64_suite = end_to_end_suite::<f64>(seed, &f64_opts, 1e-4, 1);
    for o in &mut f64_suite {
        o.name = format!("f64 {}", o.name);
    }
    all.extend(f64_suite);
    all
}
