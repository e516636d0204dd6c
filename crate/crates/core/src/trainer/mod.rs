//! End-to-end alternating optimization: discriminators step on detached
//! generator outputs, then the translator and task network step jointly on
//! the weighted objective, with dual Adam configurations and the epoch
//! learning-rate schedule. Every benchmark/ablation variant shares this
//! loop and differs only in which losses and data feed it.

mod config;
mod data;

pub use config::{lr_schedule, ConfigError, TrainConfig, Variant};
pub use data::{epoch_order, DataAuditEntry, SplitData};

use crate::eval::{
    evaluate_task_net, metrics_csv_row, EvalError, EvalProtocol, MetricsRecord,
    METRICS_CSV_HEADER,
};
use crate::losses::{
    feature_gan_losses, lsgan_d_loss, lsgan_g_loss, reconstruction_loss, smoothness_loss,
    task_loss, total_objective, LossReport,
};
use crate::nets::{DiscriminatorFeat, DiscriminatorR, TaskNetF, TranslatorG};
use crate::scenegen::{read_meta_depth_range, SceneError};
use crate::tensor::{
    no_grad, read_t2np_file, write_t2np_file, Adam, OptimizerConfig, ParamSet, Tensor,
    TensorError,
};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum TrainError {
    Config(String),
    Data(SceneError),
    Tensor(TensorError),
    Eval(EvalError),
    /// A loss went non-finite; the step and a batch snapshot are reported.
    NanAbort { step: u64, detail: String },
    Io(std::io::Error),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(m) => write!(f, "config: {m}"),
            TrainError::Data(e) => write!(f, "data: {e}"),
            TrainError::Tensor(e) => write!(f, "tensor: {e}"),
            TrainError::Eval(e) => write!(f, "eval: {e}"),
            TrainError::NanAbort { step, detail } => {
                write!(f, "non-finite loss at step {step}: {detail}")
            }
            TrainError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<SceneError> for TrainError {
    fn from(e: SceneError) -> Self {
        TrainError::Data(e)
    }
}
impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}
impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(e)
    }
}
impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}
impl From<ConfigError> for TrainError {
    fn from(e: ConfigError) -> Self {
        TrainError::Config(e.0)
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

pub struct Trainer {
    pub cfg: TrainConfig,
    g: TranslatorG<f32>,
    dr: DiscriminatorR<f32>,
    df: DiscriminatorFeat<f32>,
    ft: TaskNetF<f32>,
    opt_g: Adam<f32>,
    opt_dr: Adam<f32>,
    opt_df: Adam<f32>,
    opt_ft: Adam<f32>,
    syn: Option<SplitData>,
    real: Option<SplitData>,
    audit: Vec<DataAuditEntry>,
    pub g_updates: u64,
    pub d_updates: u64,
    pub epochs_completed: usize,
    depth_range: (f32, f32, f32),
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, data_root: &Path) -> Result<Trainer> {
        cfg.validate()?;
        let variant = cfg.variant;
        let depth_range = read_meta_depth_range(data_root).ok_or_else(|| {
            TrainError::Config(format!(
                "no dataset.meta with depth range under {}",
                data_root.display()
            ))
        })?;

        let mut audit = Vec::new();
        let syn = if variant.needs_syn_train() {
            let s = SplitData::load(data_root, "syn_train", true)?;
            audit.push(DataAuditEntry {
                split: "syn_train".into(),
                depth_used: true,
            });
            Some(s)
        } else {
            None
        };
        let real = if variant.trains_on_real_test() {
            let s = SplitData::load(data_root, "real_test", true)?;
            audit.push(DataAuditEntry {
                split: "real_test".into(),
                depth_used: true,
            });
            Some(s)
        } else if variant.needs_real_train() {
            let s = SplitData::load(data_root, "real_train", false)?;
            audit.push(DataAuditEntry {
                split: "real_train".into(),
                depth_used: false,
            });
            Some(s)
        } else {
            None
        };

        let g = TranslatorG::new(mix(cfg.seed, 0x47));
        let dr = DiscriminatorR::new(mix(cfg.seed, 0x4452));
        let df = DiscriminatorFeat::new(mix(cfg.seed, 0x4446));
        let ft = TaskNetF::new(
            mix(cfg.seed, 0x4654),
            depth_range.0 as f64,
            depth_range.2 as f64,
        );

        let adv = OptimizerConfig::new(cfg.lr_translation, cfg.adam_adv.0, cfg.adam_adv.1);
        let task = OptimizerConfig::new(cfg.lr_task, cfg.adam_task.0, cfg.adam_task.1);
        let opt_g = Adam::new(adv, &g.params().tensors());
        let opt_dr = Adam::new(adv, &dr.params().tensors());
        let opt_df = Adam::new(adv, &df.params().tensors());
        let opt_ft = Adam::new(task, &ft.params().tensors());

        Ok(Trainer {
            cfg: cfg.clone(),
            g,
            dr,
            df,
            ft,
            opt_g,
            opt_dr,
            opt_df,
            opt_ft,
            syn,
            real,
            audit,
            g_updates: 0,
            d_updates: 0,
            epochs_completed: 0,
            depth_range,
        })
    }

    pub fn g(&self) -> &TranslatorG<f32> {
        &self.g
    }
    pub fn dr(&self) -> &DiscriminatorR<f32> {
        &self.dr
    }
    pub fn df(&self) -> &DiscriminatorFeat<f32> {
        &self.df
    }
    pub fn ft(&self) -> &TaskNetF<f32> {
        &self.ft
    }
    pub fn syn_split(&self) -> Option<&SplitData> {
        self.syn.as_ref()
    }
    pub fn real_split(&self) -> Option<&SplitData> {
        self.real.as_ref()
    }
    pub fn data_audit(&self) -> &[DataAuditEntry] {
        &self.audit
    }
    pub fn eval_protocol(&self) -> EvalProtocol {
        EvalProtocol {
            clamp: (self.depth_range.0 as f64, self.depth_range.2 as f64),
            gt_cap: Some(self.cfg.d_cap.min(self.depth_range.2 as f64)),
            crop: None,
        }
    }

    /// Total scheduled epochs: the separated variant runs the schedule
    /// twice (translation phase, then task phase).
    pub fn scheduled_epochs(&self) -> usize {
        if self.cfg.variant == Variant::Separated {
            2 * self.cfg.total_epochs()
        } else {
            self.cfg.total_epochs()
        }
    }

    /// True once the separated variant has moved to its task phase.
    fn separated_task_phase(&self, epoch: usize) -> bool {
        self.cfg.variant == Variant::Separated && epoch >= self.cfg.total_epochs()
    }

    /// Apply the learning-rate schedule for an epoch (per phase for the
    /// separated variant).
    pub fn apply_lr_schedule(&mut self, epoch: usize) {
        let phase_epoch = if self.cfg.variant == Variant::Separated {
            epoch % self.cfg.total_epochs()
        } else {
            epoch
        };
        let lr_g = lr_schedule(phase_epoch, self.cfg.lr_translation, &self.cfg);
        let lr_t = lr_schedule(phase_epoch, self.cfg.lr_task, &self.cfg);
        self.opt_g.set_learning_rate(lr_g);
        self.opt_dr.set_learning_rate(lr_g);
        self.opt_df.set_learning_rate(lr_g);
        self.opt_ft.set_learning_rate(lr_t);
    }

    /// Steps per epoch: the shortest used split, floor-divided by batch.
    pub fn steps_per_epoch(&self) -> usize {
        let b = self.cfg.batch_size;
        let mut steps = usize::MAX;
        if let Some(s) = &self.syn {
            steps = steps.min(s.len() / b);
        }
        if let Some(r) = &self.real {
            steps = steps.min(r.len() / b);
        }
        if steps == usize::MAX {
            0
        } else {
            steps.max(1)
        }
    }

    fn zero_all_grads(&self) {
        self.g.params().zero_grads();
        self.dr.params().zero_grads();
        self.df.params().zero_grads();
        self.ft.params().zero_grads();
    }

    fn params_have_grads(set: &ParamSet<f32>) -> bool {
        set.iter().any(|(_, t)| t.grad().is_some())
    }

    /// One alternation round on explicit sample indices. `epoch` selects
    /// the separated-variant phase.
    pub fn train_step(
        &mut self,
        epoch: usize,
        syn_indices: &[usize],
        real_indices: &[usize],
    ) -> Result<LossReport> {
        let variant = self.cfg.variant;
        let mut report = LossReport::default();

        // task-only variants: plain supervised updates
        if !variant.uses_translator() {
            let (split, indices) = match variant {
                Variant::AllSynthetic => (self.syn.as_ref().unwrap(), syn_indices),
                Variant::AllReal => (self.real.as_ref().unwrap(), real_indices),
                _ => unreachable!(),
            };
            let x = split.image_batch(indices);
            let y = split.depth_batch(indices)?;
            let pred = self.ft.predict_depth(&x)?;
            let task = task_loss(&pred, &y)?;
            report.task = task.item()? as f64;
            let total = task.mul_scalar(self.cfg.weights.alpha_t as f32);
            let total_val = total.item()?;
            if !total_val.is_finite() {
                return Err(self.nan_abort(&report, indices, &[]));
            }
            total.backward()?;
            self.opt_ft.step(&self.ft.params().tensors());
            self.zero_all_grads();
            self.g_updates += 1;
            return Ok(total_objective(report, &self.cfg.weights));
        }

        let task_phase = self.separated_task_phase(epoch);
        let translation_phase = self.cfg.variant != Variant::Separated || !task_phase;
        let use_ft = self.cfg.variant != Variant::Separated || task_phase;
        let image_gan = variant.uses_image_gan() && translation_phase;
        let feature_gan = variant.uses_feature_gan() && use_ft;
        let real_recon = variant.uses_real_recon() && translation_phase;
        let self_recon = variant.uses_self_recon();
        let weights = self.cfg.weights;

        let syn_split = self.syn.as_ref().unwrap();
        let real_split = self.real.as_ref().unwrap();
        let x_s = syn_split.image_batch(syn_indices);
        let y_s = syn_split.depth_batch(syn_indices)?;
        let x_r = real_split.image_batch(real_indices);

        // shared forwards
        let fake = if translation_phase {
            self.g.translate(&x_s)?
        } else {
            // frozen translator: forward only, no graph
            let guard = no_grad();
            let out = self.g.translate(&x_s)?;
            drop(guard);
            out
        };
        let recon_out = if real_recon {
            Some(self.g.translate(&x_r)?)
        } else {
            None
        };
        let pred_s = if use_ft {
            Some(self.ft.predict_depth(&fake)?)
        } else {
            None
        };
        let pred_r = if use_ft {
            Some(self.ft.predict_depth(&x_r)?)
        } else {
            None
        };

        // (a) discriminator updates on detached generator outputs
        let do_d_update = self.g_updates % self.cfg.g_per_d_updates as u64 == 0;
        if do_d_update && (image_gan || feature_gan) {
            if image_gan {
                let s_real = self.dr.discriminate(&x_r)?;
                let s_fake = self.dr.discriminate(&fake.detach())?;
                let d_loss = lsgan_d_loss(&s_real, &s_fake)?;
                report.gan_d = d_loss.item()? as f64;
                d_loss.backward()?;
            }
            if feature_gan {
                let tap_s = pred_s.as_ref().unwrap().feature_tap.detach();
                let tap_r = pred_r.as_ref().unwrap().feature_tap.detach();
                let score_s = self.df.discriminate(&tap_s)?;
                let score_r = self.df.discriminate(&tap_r)?;
                let (_, d_loss) =
                    feature_gan_losses(&score_s, &score_r, self.cfg.feature_gan_mirrored)?;
                report.gan_feat_d = d_loss.item()? as f64;
                d_loss.backward()?;
            }
            // detachment: the discriminator losses must not reach G or fT
            debug_assert!(!Self::params_have_grads(self.g.params()));
            debug_assert!(!Self::params_have_grads(self.ft.params()));
            if image_gan {
                self.opt_dr.step(&self.dr.params().tensors());
                self.dr.params().zero_grads();
            }
            if feature_gan {
                self.opt_df.step(&self.df.params().tensors());
                self.df.params().zero_grads();
            }
            self.d_updates += 1;
        }

        // (b) generator/task update on the weighted objective
        let mut total: Option<Tensor<f32>> = None;
        let mut add_term = |t: &Tensor<f32>, w: f64| -> Result<()> {
            let weighted = t.mul_scalar(w as f32);
            total = Some(match total.take() {
                Some(acc) => acc.add(&weighted)?,
                None => weighted,
            });
            Ok(())
        };

        if image_gan {
            let s_fake = self.dr.discriminate(&fake)?;
            let gan_g = lsgan_g_loss(&s_fake);
            report.gan_g = gan_g.item()? as f64;
            add_term(&gan_g, 1.0)?;
        }
        if feature_gan {
            // generator-side pressure: literal class assignment pushes the
            // real-image tap toward the translated class; the mirrored
            // assignment pushes the translated tap toward the real class.
            let attached_scores = if self.cfg.feature_gan_mirrored {
                self.df
                    .discriminate(&pred_s.as_ref().unwrap().feature_tap)?
            } else {
                self.df
                    .discriminate(&pred_r.as_ref().unwrap().feature_tap)?
            };
            let g_side = lsgan_g_loss(&attached_scores);
            report.gan_feat_g = g_side.item()? as f64;
            add_term(&g_side, weights.alpha_f)?;
        }
        if let Some(recon_out) = &recon_out {
            let r = reconstruction_loss(recon_out, &x_r)?;
            report.recon = r.item()? as f64;
            add_term(&r, weights.alpha_r)?;
        } else if self_recon {
            let r = reconstruction_loss(&fake, &x_s)?;
            report.recon = r.item()? as f64;
            add_term(&r, weights.alpha_r)?;
        }
        if let Some(pred_s) = &pred_s {
            let t = task_loss(pred_s, &y_s)?;
            report.task = t.item()? as f64;
            add_term(&t, weights.alpha_t)?;
        }
        if use_ft && variant.uses_smoothness() {
            let s = smoothness_loss(pred_r.as_ref().unwrap(), &x_r)?;
            report.smooth = s.item()? as f64;
            add_term(&s, weights.alpha_s)?;
        }

        let total = total.ok_or_else(|| {
            TrainError::Config(format!("variant {variant} produced no generator-side loss"))
        })?;
        let total_val = total.item()?;
        if !total_val.is_finite()
            || !report.gan_d.is_finite()
            || !report.gan_feat_d.is_finite()
        {
            return Err(self.nan_abort(&report, syn_indices, real_indices));
        }
        total.backward()?;

        if translation_phase {
            self.opt_g.step(&self.g.params().tensors());
        }
        if use_ft {
            self.opt_ft.step(&self.ft.params().tensors());
        }
        // incidental gradients that flowed into the discriminators through
        // the attached scoring passes are dropped with the rest
        self.zero_all_grads();
        self.g_updates += 1;

        Ok(total_objective(report, &weights))
    }

    fn nan_abort(&self, report: &LossReport, syn: &[usize], real: &[usize]) -> TrainError {
        let syn_ids: Vec<&str> = syn
            .iter()
            .filter_map(|&i| self.syn.as_ref().map(|s| s.sample_id(i)))
            .collect();
        let real_ids: Vec<&str> = real
            .iter()
            .filter_map(|&i| self.real.as_ref().map(|s| s.sample_id(i)))
            .collect();
        TrainError::NanAbort {
            step: self.g_updates,
            detail: format!(
                "report {report:?}; synthetic batch {syn_ids:?}; real batch {real_ids:?}"
            ),
        }
    }

    // -- checkpointing -----------------------------------------------------

    fn save_optimizer(path: &Path, params: &ParamSet<f32>, opt: &Adam<f32>) -> Result<()> {
        let mut buffers: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        for ((name, tensor), (m, v)) in params.iter().zip(opt.slots().iter()) {
            buffers.push((format!("{name}.m"), tensor.shape().to_vec(), m.clone()));
            buffers.push((format!("{name}.v"), tensor.shape().to_vec(), v.clone()));
        }
        buffers.push(("step_count".into(), vec![1], vec![opt.step_count() as f32]));
        let refs: Vec<(&str, &[usize], &[f32])> = buffers
            .iter()
            .map(|(n, d, v)| (n.as_str(), d.as_slice(), v.as_slice()))
            .collect();
        write_t2np_file(path, &refs)?;
        Ok(())
    }

    fn load_optimizer(path: &Path, params: &ParamSet<f32>, opt: &mut Adam<f32>) -> Result<()> {
        let entries = read_t2np_file(path)?;
        let find = |name: &str| -> Result<Vec<f32>> {
            entries
                .iter()
                .find(|(n, _, _)| n == name)
                .map(|(_, _, v)| v.clone())
                .ok_or_else(|| {
                    TrainError::Config(format!("optimizer state missing entry '{name}'"))
                })
        };
        let mut slots = Vec::new();
        for (name, _) in params.iter() {
            slots.push((find(&format!("{name}.m"))?, find(&format!("{name}.v"))?));
        }
        let step = find("step_count")?[0] as u64;
        opt.restore(step, slots);
        Ok(())
    }

    /// Write all network and optimizer state for one epoch.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.g.params().save(&dir.join("G.t2np"))?;
        self.dr.params().save(&dir.join("DR.t2np"))?;
        self.df.params().save(&dir.join("Dfeat.t2np"))?;
        self.ft.params().save(&dir.join("fT.t2np"))?;
        Self::save_optimizer(&dir.join("opt_G.t2np"), self.g.params(), &self.opt_g)?;
        Self::save_optimizer(&dir.join("opt_DR.t2np"), self.dr.params(), &self.opt_dr)?;
        Self::save_optimizer(&dir.join("opt_Dfeat.t2np"), self.df.params(), &self.opt_df)?;
        Self::save_optimizer(&dir.join("opt_fT.t2np"), self.ft.params(), &self.opt_ft)?;
        fs::write(
            dir.join("state.txt"),
            format!(
                "epochs_completed = {}\ng_updates = {}\nd_updates = {}\n",
                self.epochs_completed, self.g_updates, self.d_updates
            ),
        )?;
        Ok(())
    }

    /// Restore networks, optimizers and counters from a checkpoint dir.
    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<()> {
        self.g.params().load_from(&dir.join("G.t2np"))?;
        self.dr.params().load_from(&dir.join("DR.t2np"))?;
        self.df.params().load_from(&dir.join("Dfeat.t2np"))?;
        self.ft.params().load_from(&dir.join("fT.t2np"))?;
        Self::load_optimizer(&dir.join("opt_G.t2np"), self.g.params(), &mut self.opt_g)?;
        Self::load_optimizer(&dir.join("opt_DR.t2np"), self.dr.params(), &mut self.opt_dr)?;
        Self::load_optimizer(&dir.join("opt_Dfeat.t2np"), self.df.params(), &mut self.opt_df)?;
        Self::load_optimizer(&dir.join("opt_fT.t2np"), self.ft.params(), &mut self.opt_ft)?;
        let state = fs::read_to_string(dir.join("state.txt"))?;
        for line in state.lines() {
            if let Some((k, v)) = line.split_once('=') {
                let v = v.trim();
                match k.trim() {
                    "epochs_completed" => {
                        self.epochs_completed = v.parse().map_err(|_| {
                            TrainError::Config("bad epochs_completed in state".into())
                        })?
                    }
                    "g_updates" => {
                        self.g_updates = v
                            .parse()
                            .map_err(|_| TrainError::Config("bad g_updates in state".into()))?
                    }
                    "d_updates" => {
                        self.d_updates = v
                            .parse()
                            .map_err(|_| TrainError::Config("bad d_updates in state".into()))?
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Outcome of a full training run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub variant: Variant,
    /// (epoch, metrics on the evaluation split), one per evaluated epoch.
    pub per_epoch: Vec<(usize, MetricsRecord)>,
    pub final_metrics: Option<MetricsRecord>,
    /// Epoch with the lowest absolute relative error.
    pub best_epoch: Option<(usize, f64)>,
}

/// Train a variant end to end, writing the run directory layout:
/// `config.snapshot`, `losses.csv`, `checkpoints/epoch_<n>/*.t2np`,
/// `metrics.csv`. With `resume`, continues from the last complete epoch
/// checkpoint and reproduces the uninterrupted trajectory bit-exactly.
pub fn run_training(
    cfg: &TrainConfig,
    data_root: &Path,
    out_dir: &Path,
    resume: bool,
) -> Result<RunSummary> {
    cfg.validate()?;
    let checkpoints_root = out_dir.join("checkpoints");
    if out_dir.exists() && !resume {
        let non_empty = fs::read_dir(out_dir)?.next().is_some();
        if non_empty {
            return Err(TrainError::Config(format!(
                "output directory '{}' is not empty (use resume to continue)",
                out_dir.display()
            )));
        }
    }
    fs::create_dir_all(&checkpoints_root)?;
    fs::write(out_dir.join("config.snapshot"), cfg.snapshot())?;

    let mut trainer = Trainer::new(cfg, data_root)?;
    let total_epochs = trainer.scheduled_epochs();
    let run_name = out_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());

    // resume from the newest complete epoch checkpoint
    let mut start_epoch = 0usize;
    if resume {
        let mut latest: Option<(usize, PathBuf)> = None;
        if checkpoints_root.exists() {
            for entry in fs::read_dir(&checkpoints_root)? {
                let path = entry?.path();
                if let Some(name) = path.file_name().and_then(|s| s.to_str()) {
                    if let Some(num) = name.strip_prefix("epoch_") {
                        if let Ok(e) = num.parse::<usize>() {
                            if path.join("state.txt").exists()
                                && latest.as_ref().map(|(le, _)| e > *le).unwrap_or(true)
                            {
                                latest = Some((e, path.clone()));
                            }
                        }
                    }
                }
            }
        }
        if let Some((epoch, dir)) = latest {
            trainer.load_checkpoint(&dir)?;
            start_epoch = epoch + 1;
            truncate_csv(&out_dir.join("losses.csv"), 0, trainer.g_updates)?;
            truncate_metrics_csv(&out_dir.join("metrics.csv"), epoch)?;
        }
    }

    let losses_path = out_dir.join("losses.csv");
    if start_epoch == 0 || !losses_path.exists() {
        fs::write(&losses_path, format!("{}\n", LossReport::CSV_HEADER))?;
    }
    let metrics_path = out_dir.join("metrics.csv");
    if start_epoch == 0 || !metrics_path.exists() {
        fs::write(&metrics_path, format!("{METRICS_CSV_HEADER}\n"))?;
    }

    let eval_manifest = crate::scenegen::load_manifest(data_root, "real_test")?;
    let protocol = trainer.eval_protocol();
    let mut per_epoch: Vec<(usize, MetricsRecord)> = Vec::new();

    for epoch in start_epoch..total_epochs {
        trainer.apply_lr_schedule(epoch);
        let steps = trainer.steps_per_epoch();
        let b = cfg.batch_size;
        let syn_order = trainer
            .syn_split()
            .map(|s| epoch_order(cfg.seed, 1, epoch, s.len()))
            .unwrap_or_default();
        let real_order = trainer
            .real_split()
            .map(|r| epoch_order(cfg.seed, 2, epoch, r.len()))
            .unwrap_or_default();

        let mut losses_file = fs::OpenOptions::new().append(true).open(&losses_path)?;
        for step in 0..steps {
            let syn_idx = if syn_order.is_empty() {
                &[][..]
            } else {
                &syn_order[step * b..(step + 1) * b]
            };
            let real_idx = if real_order.is_empty() {
                &[][..]
            } else {
                &real_order[step * b..(step + 1) * b]
            };
            let report = match trainer.train_step(epoch, syn_idx, real_idx) {
                Ok(r) => r,
                Err(e @ TrainError::NanAbort { .. }) => {
                    fs::write(out_dir.join("nan_dump.txt"), format!("{e}\n"))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            writeln!(losses_file, "{}", report.csv_row(trainer.g_updates))?;
        }
        losses_file.flush()?;
        trainer.epochs_completed = epoch + 1;

        trainer.save_checkpoint(&checkpoints_root.join(format!("epoch_{epoch}")))?;

        // the translation phase of the separated variant has no task net
        // worth scoring yet
        let skip_eval =
            cfg.variant == Variant::Separated && epoch < cfg.total_epochs();
        if !skip_eval {
            let metrics = evaluate_task_net(trainer.ft(), &eval_manifest, &protocol)?;
            let mut mfile = fs::OpenOptions::new().append(true).open(&metrics_path)?;
            writeln!(
                mfile,
                "{}",
                metrics_csv_row(&run_name, cfg.variant.name(), epoch as i64, &metrics)
            )?;
            per_epoch.push((epoch, metrics));
        }
    }

    let final_metrics = per_epoch.last().map(|(_, m)| *m);
    let best_epoch = per_epoch
        .iter()
        .min_by(|a, b| a.1.abs_rel.partial_cmp(&b.1.abs_rel).unwrap())
        .map(|(e, m)| (*e, m.abs_rel));

    Ok(RunSummary {
        run_dir: out_dir.to_path_buf(),
        variant: cfg.variant,
        per_epoch,
        final_metrics,
        best_epoch,
    })
}

/// Drop loss rows beyond the resumed step counter (a previous run may have
/// died mid-epoch, past the checkpoint being resumed).
fn truncate_csv(path: &Path, step_column: usize, max_step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            kept.push_str(line);
            kept.push('\n');
            continue;
        }
        let step: u64 = line
            .split(',')
            .nth(step_column)
            .and_then(|s| s.parse().ok())
            .unwrap_or(u64::MAX);
        if step <= max_step {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

/// Drop metrics rows beyond the resumed epoch.
fn truncate_metrics_csv(path: &Path, max_epoch: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            kept.push_str(line);
            kept.push('\n');
            continue;
        }
        let epoch: i64 = line
            .split(',')
            .nth(2)
            .and_then(|s| s.parse().ok())
            .unwrap_or(i64::MAX);
        if epoch <= max_epoch as i64 {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}
