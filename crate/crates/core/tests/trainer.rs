//! Trainer contracts on a micro dataset: variant loss subsets, detachment,
//! update-ratio accounting, weight sharing, bit-exact determinism and
//! resume, data isolation, and the schedule.

use t2net::losses::LossWeights;
use t2net::scenegen::{generate_dataset, DatasetConfig, SceneConfig};
use t2net::trainer::{
    lr_schedule, run_training, ConfigError, TrainConfig, Trainer, Variant,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

/// One shared micro dataset for every test in this file.
fn micro_dataset() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = std::env::temp_dir().join(format!("t2net-microdata-{}", std::process::id()));
        if !dir.join("dataset.meta").exists() {
            let cfg = DatasetConfig {
                master_seed: 404,
                count_syn: 16,
                count_real: 16,
                count_test: 8,
                scene: SceneConfig::default(),
                overwrite: true,
            };
            generate_dataset(&cfg, &dir).unwrap();
        }
        dir
    })
}

fn micro_config(variant: Variant, seed: u64) -> TrainConfig {
    TrainConfig {
        variant,
        epochs_constant: 1,
        epochs_decay: 1,
        batch_size: 4,
        seed,
        ..TrainConfig::default()
    }
}

// ---- config parsing -------------------------------------------------------

#[test]
fn config_round_trips_through_snapshot() {
    let mut cfg = micro_config(Variant::DImageOnly, 7);
    cfg.weights = LossWeights::outdoor();
    cfg.g_per_d_updates = 5;
    let parsed = TrainConfig::parse(&cfg.snapshot()).unwrap();
    assert_eq!(parsed, cfg);
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert!(matches!(
        TrainConfig::parse("nonsense_key = 3"),
        Err(ConfigError(_))
    ));
    assert!(TrainConfig::parse("batch_size = zero").is_err());
    assert!(TrainConfig::parse("variant = bogus").is_err());
    // comments and blank lines are fine
    let ok = TrainConfig::parse("# comment\n\nseed = 9 # trailing\n").unwrap();
    assert_eq!(ok.seed, 9);
}

#[test]
fn learning_rate_schedule_boundaries() {
    let cfg = TrainConfig::default(); // 10 constant + 10 decay
    let base = 1e-4;
    assert_eq!(lr_schedule(0, base, &cfg), base);
    assert_eq!(lr_schedule(9, base, &cfg), base);
    let e10 = lr_schedule(10, base, &cfg);
    assert!((e10 - base * 10.0 / 11.0).abs() < 1e-18);
    let e19 = lr_schedule(19, base, &cfg);
    assert!((e19 - base / 11.0).abs() < 1e-18);
}

// ---- variant contracts ------------------------------------------------------

#[test]
fn all_synthetic_reports_only_task_terms() {
    let data = micro_dataset();
    let mut t = Trainer::new(&micro_config(Variant::AllSynthetic, 1), data).unwrap();
    let report = t.train_step(0, &[0, 1, 2, 3], &[]).unwrap();
    assert_eq!(report.gan_g, 0.0);
    assert_eq!(report.gan_d, 0.0);
    assert_eq!(report.gan_feat_g, 0.0);
    assert_eq!(report.gan_feat_d, 0.0);
    assert_eq!(report.recon, 0.0);
    assert_eq!(report.smooth, 0.0);
    assert!(report.task > 0.0);
}

#[test]
fn zero_weights_and_unit_ratio_reduce_full_to_d_image_only_fields() {
    let data = micro_dataset();
    let mut cfg = micro_config(Variant::Full, 5);
    cfg.weights.alpha_r = 0.0;
    cfg.weights.alpha_f = 0.0;
    cfg.g_per_d_updates = 1;
    let mut full = Trainer::new(&cfg, data).unwrap();
    let report_full = full.train_step(0, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();

    let cfg_img = micro_config(Variant::DImageOnly, 5);
    let mut img_only = Trainer::new(&cfg_img, data).unwrap();
    let report_img = img_only.train_step(0, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();

    // identical populated fields: the image-GAN pair and the task terms
    assert!(report_full.gan_g > 0.0 && report_img.gan_g > 0.0);
    assert!(report_full.gan_d > 0.0 && report_img.gan_d > 0.0);
    assert!(report_full.task > 0.0 && report_img.task > 0.0);
    assert_eq!(report_img.gan_feat_g, 0.0);
    assert_eq!(report_img.gan_feat_d, 0.0);
    // with both alphas zeroed, the weighted total matches the d_image_only
    // structure: gan_g + alpha_t * task + alpha_s * smooth (+ alpha_r *
    // recon which d_image_only keeps but full has weighted to zero)
    let expect_full =
        report_full.gan_g + 20.0 * report_full.task + 0.01 * report_full.smooth;
    assert!((report_full.total_g_side - expect_full).abs() < 1e-9);
}

#[test]
fn self_regularized_reconstructs_synthetic_input() {
    let data = micro_dataset();
    let mut t = Trainer::new(&micro_config(Variant::SelfRegularized, 3), data).unwrap();
    let report = t.train_step(0, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
    // recon is populated even though no real-image reconstruction ran
    assert!(report.recon > 0.0);
    assert!(report.gan_g > 0.0);
}

#[test]
fn no_recon_variant_reports_zero_recon() {
    let data = micro_dataset();
    let mut t = Trainer::new(&micro_config(Variant::NoRecon, 3), data).unwrap();
    let report = t.train_step(0, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
    assert_eq!(report.recon, 0.0);
    assert!(report.gan_g > 0.0);
    assert!(report.gan_feat_g > 0.0);
    assert!(report.task > 0.0);
}

// ---- invariants ------------------------------------------------------------

#[test]
fn update_ratio_accounting_holds_over_a_window() {
    let data = micro_dataset();
    let mut cfg = micro_config(Variant::Full, 2);
    cfg.g_per_d_updates = 5;
    let mut t = Trainer::new(&cfg, data).unwrap();
    for step in 0..10 {
        let indices = [step % 4, (step + 1) % 4, (step + 2) % 4, (step + 3) % 4];
        t.train_step(0, &indices, &indices).unwrap();
    }
    assert_eq!(t.g_updates, 10);
    assert_eq!(t.d_updates, 2);
    assert_eq!(t.g_updates, cfg.g_per_d_updates as u64 * t.d_updates);
}

#[test]
fn weight_sharing_between_pipelines_is_by_storage() {
    let data = micro_dataset();
    let t = Trainer::new(&micro_config(Variant::Full, 4), data).unwrap();
    // both pipelines read the same network objects: parameter identity
    let g_params_a = t.g().params().tensors();
    let g_params_b = t.g().params().tensors();
    for (a, b) in g_params_a.iter().zip(g_params_b.iter()) {
        assert_eq!(a.id(), b.id());
    }
    let ft_a = t.ft().params().tensors();
    let ft_b = t.ft().params().tensors();
    for (a, b) in ft_a.iter().zip(ft_b.iter()) {
        assert_eq!(a.id(), b.id());
    }
}

#[test]
fn discriminator_updates_leave_generator_untouched() {
    // run a step, then re-run only the D phase by making a fresh trainer
    // and calling train_step with g_per_d = 1; the in-step debug assert
    // checks detachment, here we additionally verify across the boundary:
    // a full step must leave zero STALE gradients anywhere.
    let data = micro_dataset();
    let mut t = Trainer::new(&micro_config(Variant::Full, 6), data).unwrap();
    t.train_step(0, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
    for (name, p) in t.g().params().iter() {
        assert!(p.grad().is_none(), "stale grad on G::{name}");
    }
    for (name, p) in t.ft().params().iter() {
        assert!(p.grad().is_none(), "stale grad on fT::{name}");
    }
    for (name, p) in t.dr().params().iter() {
        assert!(p.grad().is_none(), "stale grad on DR::{name}");
    }
}

#[test]
fn discriminator_phase_moves_discriminators_not_generators() {
    let data = micro_dataset();
    let mut t = Trainer::new(&micro_config(Variant::Full, 8), data).unwrap();
    let g_before = t.g().params().get("head.w").unwrap().to_vec();
    let dr_before = t.dr().params().get("c1.w").unwrap().to_vec();
    t.train_step(0, &[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap();
    let g_after = t.g().params().get("head.w").unwrap().to_vec();
    let dr_after = t.dr().params().get("c1.w").unwrap().to_vec();
    // both moved overall (G via its own update), discriminator via its own
    assert_ne!(dr_before, dr_after);
    assert_ne!(g_before, g_after);
}

#[test]
fn data_isolation_audit() {
    let data = micro_dataset();
    // all_real never touches synthetic data
    let t = Trainer::new(&micro_config(Variant::AllReal, 1), data).unwrap();
    assert!(t.data_audit().iter().all(|e| e.split != "syn_train"));
    assert!(t.syn_split().is_none());

    // all_synthetic and no_recon never read real-test depth for training
    for variant in [Variant::AllSynthetic, Variant::NoRecon] {
        let t = Trainer::new(&micro_config(variant, 1), data).unwrap();
        assert!(
            t.data_audit()
                .iter()
                .all(|e| !(e.split == "real_test" && e.depth_used)),
            "variant {variant} leaked eval depth into training"
        );
    }
}

#[test]
fn all_real_trains_on_eval_pairs_only() {
    let data = micro_dataset();
    let t = Trainer::new(&micro_config(Variant::AllReal, 1), data).unwrap();
    let audit = t.data_audit();
    assert_eq!(audit.len(), 1);
    assert_eq!(audit[0].split, "real_test");
    assert!(audit[0].depth_used);
}

// ---- end-to-end runs ---------------------------------------------------------

#[test]
fn smoke_run_writes_run_directory_layout() {
    let data = micro_dataset();
    let out = tempfile::tempdir().unwrap();
    let run_dir = out.path().join("run_full");
    let cfg = micro_config(Variant::Full, 11);
    let summary = run_training(&cfg, data, &run_dir, false).unwrap();

    assert!(run_dir.join("config.snapshot").exists());
    assert!(run_dir.join("losses.csv").exists());
    assert!(run_dir.join("metrics.csv").exists());
    assert!(run_dir.join("checkpoints/epoch_0/G.t2np").exists());
    assert!(run_dir.join("checkpoints/epoch_1/fT.t2np").exists());
    assert_eq!(summary.per_epoch.len(), 2);
    assert!(summary.final_metrics.is_some());

    // snapshot parses back to the exact config
    let snap = fs::read_to_string(run_dir.join("config.snapshot")).unwrap();
    assert_eq!(TrainConfig::parse(&snap).unwrap(), cfg);

    // losses.csv has header + 2 epochs x 4 steps
    let losses = fs::read_to_string(run_dir.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 8);
    assert!(losses.starts_with("step,gan_g,gan_d,"));
}

#[test]
fn identical_seeds_produce_bit_identical_runs() {
    let data = micro_dataset();
    let out = tempfile::tempdir().unwrap();
    let cfg = micro_config(Variant::Full, 42);
    // same run name under different parents, so every byte including the
    // metrics rows (which embed the run name) must match
    run_training(&cfg, data, &out.path().join("a/run"), false).unwrap();
    run_training(&cfg, data, &out.path().join("b/run"), false).unwrap();

    let la = fs::read(out.path().join("a/run/losses.csv")).unwrap();
    let lb = fs::read(out.path().join("b/run/losses.csv")).unwrap();
    assert_eq!(la, lb);

    for name in ["G.t2np", "DR.t2np", "Dfeat.t2np", "fT.t2np"] {
        let ca = fs::read(out.path().join("a/run/checkpoints/epoch_1").join(name)).unwrap();
        let cb = fs::read(out.path().join("b/run/checkpoints/epoch_1").join(name)).unwrap();
        assert_eq!(ca, cb, "checkpoint {name} differs");
    }

    let da = fs::read(out.path().join("a/run/metrics.csv")).unwrap();
    let db = fs::read(out.path().join("b/run/metrics.csv")).unwrap();
    assert_eq!(da, db);
}

#[test]
fn resume_matches_uninterrupted_run_bit_exactly() {
    let data = micro_dataset();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = micro_config(Variant::Full, 77);
    cfg.epochs_constant = 2;
    cfg.epochs_decay = 2;

    // uninterrupted 4 epochs
    run_training(&cfg, data, &out.path().join("straight"), false).unwrap();

    // interrupted: run 4 epochs, delete the work past epoch 1, resume
    let resumed_dir = out.path().join("resumed");
    run_training(&cfg, data, &resumed_dir, false).unwrap();
    for epoch in 2..4 {
        fs::remove_dir_all(resumed_dir.join(format!("checkpoints/epoch_{epoch}"))).unwrap();
    }
    run_training(&cfg, data, &resumed_dir, true).unwrap();

    let a = fs::read(out.path().join("straight/losses.csv")).unwrap();
    let b = fs::read(resumed_dir.join("losses.csv")).unwrap();
    assert_eq!(a, b, "loss trajectories diverged after resume");

    for name in ["G.t2np", "fT.t2np", "opt_fT.t2np"] {
        let ca = fs::read(out.path().join("straight/checkpoints/epoch_3").join(name)).unwrap();
        let cb = fs::read(resumed_dir.join("checkpoints/epoch_3").join(name)).unwrap();
        assert_eq!(ca, cb, "{name} differs after resume");
    }
}

#[test]
fn separated_variant_runs_two_phases() {
    let data = micro_dataset();
    let out = tempfile::tempdir().unwrap();
    let cfg = micro_config(Variant::Separated, 9);
    let summary = run_training(&cfg, data, &out.path().join("sep"), false).unwrap();
    // schedule doubles: 2 + 2 epochs; metrics only for the task phase
    assert!(out.path().join("sep/checkpoints/epoch_3/fT.t2np").exists());
    assert_eq!(summary.per_epoch.len(), 2);
    assert_eq!(summary.per_epoch[0].0, 2);

    // phase A froze nothing of G... and phase B left G exactly where the
    // translation phase ended
    let g_phase_a = fs::read(out.path().join("sep/checkpoints/epoch_1/G.t2np")).unwrap();
    let g_phase_b = fs::read(out.path().join("sep/checkpoints/epoch_3/G.t2np")).unwrap();
    assert_eq!(g_phase_a, g_phase_b, "task phase must not move the translator");
}

#[test]
fn trainer_rejects_nonempty_output_without_resume() {
    let data = micro_dataset();
    let out = tempfile::tempdir().unwrap();
    let run_dir = out.path().join("busy");
    fs::create_dir_all(&run_dir).unwrap();
    fs::write(run_dir.join("stale"), "x").unwrap();
    let cfg = micro_config(Variant::AllSynthetic, 1);
    assert!(run_training(&cfg, data, &run_dir, false).is_err());
}
