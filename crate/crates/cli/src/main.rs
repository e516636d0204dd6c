//! Batch command-line front end: dataset generation, training, evaluation,
//! ablation sweeps, gradient checking, and image export.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use t2net::eval::{
    evaluate_task_net, format_sig6, metrics_csv_row, EvalProtocol, MetricsRecord,
    METRICS_CSV_HEADER,
};
use t2net::nets::{TaskNetF, TranslatorG};
use t2net::scenegen::{
    export_pgm, export_ppm, generate_dataset, load_batch, load_manifest, read_meta_depth_range,
    DatasetConfig, SceneConfig,
};
use t2net::tensor::Tensor;
use t2net::trainer::{run_training, TrainConfig, Variant};

#[derive(Parser)]
#[command(name = "t2net", version, about = "Synthetic-to-realistic translation with joint depth estimation on procedural data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the three dataset splits (synthetic paired, real unpaired,
    /// real evaluation).
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        count_syn: usize,
        #[arg(long, default_value_t = 2000)]
        count_real: usize,
        #[arg(long, default_value_t = 200)]
        count_test: usize,
        /// Depth cap applied to every generated depth map.
        #[arg(long, default_value_t = 10.0)]
        d_cap: f32,
        /// Replace an existing non-empty output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Train one variant end to end.
    Train {
        /// Hyperparameter file (key = value); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Variant override (else the config file / default decides).
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the last complete epoch checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on the held-out real split.
    Eval {
        /// Run directory or a specific checkpoints/epoch_<n> directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clamp_min: Option<f64>,
        #[arg(long)]
        clamp_max: Option<f64>,
        #[arg(long)]
        gt_cap: Option<f64>,
    },
    /// Run a variants x seeds grid sequentially and write ablation.csv.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variant names.
        #[arg(long)]
        variants: String,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: String,
        /// Optional shortened schedule for the grid.
        #[arg(long)]
        epochs_constant: Option<usize>,
        #[arg(long)]
        epochs_decay: Option<usize>,
    },
    /// Finite-difference gradient verification.
    Gradcheck {
        /// Which op family to check: all, tensor, losses.
        #[arg(long, default_value = "all")]
        module: String,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// per-op or end-to-end.
        #[arg(long, default_value = "per-op")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export (input, translated, predicted-depth) triplets for inspection.
    ExportImages {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            out,
            seed,
            count_syn,
            count_real,
            count_test,
            d_cap,
            overwrite,
        } => gen_data(out, seed, count_syn, count_real, count_test, d_cap, overwrite),
        Command::Train {
            config,
            variant,
            data,
            out,
            seed,
            resume,
        } => train(config, variant, data, out, seed, resume),
        Command::Eval {
            checkpoint,
            data,
            clamp_min,
            clamp_max,
            gt_cap,
        } => eval_checkpoint(checkpoint, data, clamp_min, clamp_max, gt_cap),
        Command::Ablate {
            data,
            out,
            variants,
            seeds,
            epochs_constant,
            epochs_decay,
        } => ablate(data, out, &variants, &seeds, epochs_constant, epochs_decay),
        Command::Gradcheck {
            module,
            trials,
            mode,
            seed,
        } => gradcheck(&module, trials, &mode, seed),
        Command::ExportImages {
            checkpoint,
            data,
            out,
            count,
        } => export_images(checkpoint, data, out, count),
    }
}

fn gen_data(
    out: PathBuf,
    seed: u64,
    count_syn: usize,
    count_real: usize,
    count_test: usize,
    d_cap: f32,
    overwrite: bool,
) -> Result<()> {
    let config = DatasetConfig {
        master_seed: seed,
        count_syn,
        count_real,
        count_test,
        scene: SceneConfig {
            d_cap,
            ..SceneConfig::default()
        },
        overwrite,
    };
    let manifests = generate_dataset(&config, &out)
        .map_err(|e| anyhow!("dataset generation failed: {e}"))?;
    println!("dataset written to {}", out.display());
    for m in &manifests {
        println!(
            "  {:<12} {:>6} samples  domain {:<9} config {:016x}",
            m.split,
            m.len(),
            m.domain,
            m.config_hash
        );
    }
    Ok(())
}

fn train(
    config: Option<PathBuf>,
    variant: Option<String>,
    data: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    resume: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(path) => TrainConfig::from_file(&path).map_err(|e| anyhow!("{e}"))?,
        None => TrainConfig::default(),
    };
    if let Some(name) = variant {
        cfg.variant = Variant::parse(&name).map_err(|e| anyhow!("{e}"))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    println!("resolved configuration:\n{}", cfg.snapshot());
    let summary =
        run_training(&cfg, &data, &out, resume).map_err(|e| anyhow!("training failed: {e}"))?;
    if let Some(m) = &summary.final_metrics {
        println!("final evaluation:");
        print_metrics_table(m);
    }
    if let Some((epoch, abs_rel)) = summary.best_epoch {
        println!("best epoch {epoch} (abs_rel {})", format_sig6(abs_rel));
    }
    println!("run directory: {}", summary.run_dir.display());
    Ok(())
}

/// Resolve a --checkpoint argument to (epoch dir, run dir for the CSV).
fn resolve_checkpoint(path: &Path) -> Result<(PathBuf, PathBuf)> {
    if path.join("fT.t2np").exists() {
        // a specific epoch directory; the run dir is two levels up
        let run = path
            .parent()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| path.to_path_buf());
        return Ok((path.to_path_buf(), run));
    }
    let checkpoints = path.join("checkpoints");
    if checkpoints.exists() {
        let mut best: Option<(usize, PathBuf)> = None;
        for entry in fs::read_dir(&checkpoints)? {
            let p = entry?.path();
            if let Some(num) = p
                .file_name()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_prefix("epoch_"))
                .and_then(|s| s.parse::<usize>().ok())
            {
                if p.join("fT.t2np").exists() && best.as_ref().map(|(b, _)| num > *b).unwrap_or(true)
                {
                    best = Some((num, p));
                }
            }
        }
        if let Some((_, dir)) = best {
            return Ok((dir, path.to_path_buf()));
        }
    }
    bail!("no checkpoint found under {}", path.display());
}

fn load_task_net(epoch_dir: &Path, data_root: &Path) -> Result<TaskNetF<f32>> {
    let (d_min, _d_max, d_cap) = read_meta_depth_range(data_root)
        .ok_or_else(|| anyhow!("no dataset.meta under {}", data_root.display()))?;
    let net = TaskNetF::<f32>::new(0, d_min as f64, d_cap as f64);
    net.params()
        .load_from(&epoch_dir.join("fT.t2np"))
        .context("loading fT.t2np")?;
    Ok(net)
}

fn print_metrics_table(m: &MetricsRecord) {
    println!(
        "  {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "abs_rel", "sq_rel", "rmse", "rmse_log", "d<1.25", "d<1.25^2", "d<1.25^3"
    );
    println!(
        "  {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        format_sig6(m.abs_rel),
        format_sig6(m.sq_rel),
        format_sig6(m.rmse),
        format_sig6(m.rmse_log),
        format_sig6(m.delta1),
        format_sig6(m.delta2),
        format_sig6(m.delta3),
    );
}

fn eval_checkpoint(
    checkpoint: PathBuf,
    data: PathBuf,
    clamp_min: Option<f64>,
    clamp_max: Option<f64>,
    gt_cap: Option<f64>,
) -> Result<()> {
    let (epoch_dir, run_dir) = resolve_checkpoint(&checkpoint)?;
    let (d_min, _d_max, d_cap) = read_meta_depth_range(&data)
        .ok_or_else(|| anyhow!("no dataset.meta under {}", data.display()))?;
    let protocol = EvalProtocol {
        clamp: (
            clamp_min.unwrap_or(d_min as f64),
            clamp_max.unwrap_or(d_cap as f64),
        ),
        gt_cap: gt_cap.or(Some(d_cap as f64)),
        crop: None,
    };
    let net = load_task_net(&epoch_dir, &data)?;
    let manifest = load_manifest(&data, "real_test").map_err(|e| anyhow!("{e}"))?;
    let metrics = evaluate_task_net(&net, &manifest, &protocol).map_err(|e| anyhow!("{e}"))?;

    println!(
        "checkpoint {} on {} ({} pixels)",
        epoch_dir.display(),
        manifest.split,
        metrics.n_pixels
    );
    print_metrics_table(&metrics);

    let epoch = epoch_dir
        .file_name()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("epoch_"))
        .and_then(|s| s.parse::<i64>().ok())
        .unwrap_or(-1);
    let run_name = run_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let csv = run_dir.join("metrics.csv");
    let mut file = if csv.exists() {
        fs::OpenOptions::new().append(true).open(&csv)?
    } else {
        let mut f = fs::File::create(&csv)?;
        writeln!(f, "{METRICS_CSV_HEADER}")?;
        f
    };
    writeln!(
        file,
        "{}",
        metrics_csv_row(&run_name, "eval", epoch, &metrics)
    )?;
    println!("appended to {}", csv.display());
    Ok(())
}

pub const ABLATION_CSV_HEADER: &str =
    "variant,seed,best_epoch,final_epoch,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3";

fn ablate(
    data: PathBuf,
    out: PathBuf,
    variants: &str,
    seeds: &str,
    epochs_constant: Option<usize>,
    epochs_decay: Option<usize>,
) -> Result<()> {
    let variants: Vec<Variant> = variants
        .split(',')
        .map(|s| Variant::parse(s.trim()).map_err(|e| anyhow!("{e}")))
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>().context("bad seed"))
        .collect::<Result<_>>()?;
    fs::create_dir_all(&out)?;
    let csv_path = out.join("ablation.csv");
    let mut csv = fs::File::create(&csv_path)?;
    writeln!(csv, "{ABLATION_CSV_HEADER}")?;

    // sequential on purpose: deterministic resource use
    for variant in &variants {
        for &seed in &seeds {
            let mut cfg = TrainConfig {
                variant: *variant,
                seed,
                ..TrainConfig::default()
            };
            if let Some(e) = epochs_constant {
                cfg.epochs_constant = e;
            }
            if let Some(e) = epochs_decay {
                cfg.epochs_decay = e;
            }
            let run_dir = out.join(format!("{}_s{}", variant.name(), seed));
            println!("== {} seed {seed} -> {}", variant.name(), run_dir.display());
            let summary = run_training(&cfg, &data, &run_dir, false)
                .map_err(|e| anyhow!("{} seed {seed}: {e}", variant.name()))?;
            let m = summary
                .final_metrics
                .ok_or_else(|| anyhow!("no evaluation produced"))?;
            let (best_epoch, final_epoch) = (
                summary.best_epoch.map(|(e, _)| e as i64).unwrap_or(-1),
                summary.per_epoch.last().map(|(e, _)| *e as i64).unwrap_or(-1),
            );
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{}",
                variant.name(),
                seed,
                best_epoch,
                final_epoch,
                format_sig6(m.abs_rel),
                format_sig6(m.sq_rel),
                format_sig6(m.rmse),
                format_sig6(m.rmse_log),
                format_sig6(m.delta1),
                format_sig6(m.delta2),
                format_sig6(m.delta3),
            )?;
            csv.flush()?;
            print_metrics_table(&m);
        }
    }
    println!("grid results in {}", csv_path.display());
    Ok(())
}

fn gradcheck(module: &str, trials: usize, mode: &str, seed: u64) -> Result<()> {
    let outcomes = match mode {
        "per-op" => {
            let all = t2net::verify::run_per_op(trials, seed);
            let filter: fn(&str) -> bool = match module {
                "all" => |_| true,
                "tensor" => |n| !n.contains("lsgan") && !n.contains("smoothness"),
                "losses" => |n| {
                    n.contains("lsgan") || n.contains("smoothness") || n.contains("l1_loss")
                },
                other => bail!("unknown module '{other}' (use all, tensor, losses)"),
            };
            all.into_iter().filter(|o| filter(&o.name)).collect()
        }
        "end-to-end" => t2net::verify::run_end_to_end(seed),
        other => bail!("unknown mode '{other}' (use per-op or end-to-end)"),
    };
    let mut failed = 0;
    for o in &outcomes {
        println!("{}", o.line());
        if !o.passed() {
            failed += 1;
        }
    }
    println!("{} checks, {} failed", outcomes.len(), failed);
    if failed > 0 {
        bail!("{failed} gradient checks exceeded tolerance");
    }
    Ok(())
}

fn export_images(checkpoint: PathBuf, data: PathBuf, out: PathBuf, count: usize) -> Result<()> {
    let (epoch_dir, _) = resolve_checkpoint(&checkpoint)?;
    let (d_min, _d_max, d_cap) = read_meta_depth_range(&data)
        .ok_or_else(|| anyhow!("no dataset.meta under {}", data.display()))?;
    let g = TranslatorG::<f32>::new(0);
    g.params()
        .load_from(&epoch_dir.join("G.t2np"))
        .context("loading G.t2np")?;
    let ft = load_task_net(&epoch_dir, &data)?;

    let manifest = load_manifest(&data, "real_test").map_err(|e| anyhow!("{e}"))?;
    let n = count.min(manifest.len());
    fs::create_dir_all(&out)?;
    let _guard = t2net::tensor::no_grad();
    for sample in load_batch(&manifest, &(0..n).collect::<Vec<_>>()).map_err(|e| anyhow!("{e}"))? {
        let sh = sample.image.shape().to_vec();
        let batched =
            Tensor::from_vec(&[1, sh[0], sh[1], sh[2]], sample.image.to_vec()).unwrap();
        let translated = g.translate(&batched).map_err(|e| anyhow!("{e}"))?;
        let pred = ft.predict_depth(&batched).map_err(|e| anyhow!("{e}"))?;
        let full = &pred.depths[3];

        export_ppm(&sample.image, &out.join(format!("{}_input.ppm", sample.id)))?;
        let translated_chw = Tensor::from_vec(&sh, translated.to_vec()).expect("translated shape");
        export_ppm(
            &translated_chw,
            &out.join(format!("{}_translated.ppm", sample.id)),
        )?;
        let depth_chw = Tensor::from_vec(&[1, sh[1], sh[2]], full.to_vec()).expect("depth shape");
        export_pgm(
            &depth_chw,
            d_min,
            d_cap,
            &out.join(format!("{}_depth.pgm", sample.id)),
        )?;
        println!("exported {}", sample.id);
    }
    Ok(())
}
