//! Training configuration: the benchmark/ablation variants, hyperparameter
//! file parsing (strict `key = value` lines), and the learning-rate
//! schedule.

use crate::losses::LossWeights;
use std::fmt;
use std::path::Path;

/// Benchmark and ablation variants. Each enables a documented subset of
/// losses and data:
///
/// | variant          | image GAN | feat GAN | recon            | task              | smooth | training data        |
/// |------------------|-----------|----------|------------------|-------------------|--------|----------------------|
/// | full             | yes       | yes      | real             | translated syn    | yes    | syn + real           |
/// | d_feat_only      | no        | yes      | real             | translated syn    | yes    | syn + real           |
/// | d_image_only     | yes       | no       | real             | translated syn    | yes    | syn + real           |
/// | all_synthetic    | no        | no       | no               | raw syn pairs     | no     | syn only             |
/// | all_real         | no        | no       | no               | real pairs        | no     | real eval pairs      |
/// | separated        | phase A   | phase B  | real (phase A)   | translated (B)    | B      | syn + real, 2 phases |
/// | self_regularized | yes       | yes      | synthetic self   | translated syn    | yes    | syn + real           |
/// | no_recon         | yes       | yes      | no               | translated syn    | yes    | syn + real           |
///
/// `all_real` is the paired-supervision ceiling: the toy world only carries
/// real-domain depth in the held-out evaluation split, so that split also
/// serves as its training set (it upper-bounds everything by construction).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    DFeatOnly,
    DImageOnly,
    AllSynthetic,
    AllReal,
    Separated,
    SelfRegularized,
    NoRecon,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::DFeatOnly,
        Variant::DImageOnly,
        Variant::AllSynthetic,
        Variant::AllReal,
        Variant::Separated,
        Variant::SelfRegularized,
        Variant::NoRecon,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::DFeatOnly => "d_feat_only",
            Variant::DImageOnly => "d_image_only",
            Variant::AllSynthetic => "all_synthetic",
            Variant::AllReal => "all_real",
            Variant::Separated => "separated",
            Variant::SelfRegularized => "self_regularized",
            Variant::NoRecon => "no_recon",
        }
    }

    pub fn parse(s: &str) -> Result<Variant, ConfigError> {
        Variant::ALL
            .iter()
            .find(|v| v.name() == s)
            .copied()
            .ok_or_else(|| ConfigError(format!("unknown variant '{s}'")))
    }

    /// Translator and GAN machinery involved at all.
    pub fn uses_translator(&self) -> bool {
        !matches!(self, Variant::AllSynthetic | Variant::AllReal)
    }

    pub fn uses_image_gan(&self) -> bool {
        matches!(
            self,
            Variant::Full
                | Variant::DImageOnly
                | Variant::Separated
                | Variant::SelfRegularized
                | Variant::NoRecon
        )
    }

    pub fn uses_feature_gan(&self) -> bool {
        matches!(
            self,
            Variant::Full
                | Variant::DFeatOnly
                | Variant::Separated
                | Variant::SelfRegularized
                | Variant::NoRecon
        )
    }

    /// Reconstruction over real inputs (the wide-spectrum anchor).
    pub fn uses_real_recon(&self) -> bool {
        matches!(
            self,
            Variant::Full | Variant::DFeatOnly | Variant::DImageOnly | Variant::Separated
        )
    }

    /// Self-domain reconstruction over synthetic inputs instead.
    pub fn uses_self_recon(&self) -> bool {
        matches!(self, Variant::SelfRegularized)
    }

    pub fn uses_smoothness(&self) -> bool {
        !matches!(self, Variant::AllSynthetic | Variant::AllReal)
    }

    pub fn needs_syn_train(&self) -> bool {
        !matches!(self, Variant::AllReal)
    }

    pub fn needs_real_train(&self) -> bool {
        self.uses_translator()
    }

    /// Trains on the paired real evaluation split.
    pub fn trains_on_real_test(&self) -> bool {
        matches!(self, Variant::AllReal)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs_constant: usize,
    pub epochs_decay: usize,
    pub lr_task: f64,
    pub lr_translation: f64,
    /// (beta1, beta2) for the adversarial networks (G and both D's).
    pub adam_adv: (f64, f64),
    /// (beta1, beta2) for the task network.
    pub adam_task: (f64, f64),
    /// Generator updates per discriminator update.
    pub g_per_d_updates: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Ground-truth cap mirrored into evaluation.
    pub d_cap: f64,
    /// Swap the feature-GAN class assignment (ablation hook).
    pub feature_gan_mirrored: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Full,
            epochs_constant: 10,
            epochs_decay: 10,
            lr_task: 1e-4,
            lr_translation: 2e-5,
            adam_adv: (0.5, 0.9),
            adam_task: (0.95, 0.999),
            g_per_d_updates: 1,
            batch_size: 4,
            seed: 0,
            weights: LossWeights::indoor(),
            d_cap: 10.0,
            feature_gan_mirrored: false,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.epochs_constant + self.epochs_decay
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lr_task <= 0.0 || self.lr_translation <= 0.0 {
            return Err(ConfigError("learning rates must be positive".into()));
        }
        if self.g_per_d_updates == 0 {
            return Err(ConfigError("g_per_d_updates must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ConfigError("batch_size must be >= 1".into()));
        }
        if self.total_epochs() == 0 {
            return Err(ConfigError("at least one epoch required".into()));
        }
        self.weights.validate().map_err(ConfigError)?;
        for (name, b) in [
            ("adam_adv_beta1", self.adam_adv.0),
            ("adam_adv_beta2", self.adam_adv.1),
            ("adam_task_beta1", self.adam_task.0),
            ("adam_task_beta2", self.adam_task.1),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(ConfigError(format!("{name} must be in [0,1), got {b}")));
            }
        }
        Ok(())
    }

    /// Parse strict `key = value` text: `#` comments, unknown keys rejected.
    pub fn parse(text: &str) -> Result<TrainConfig, ConfigError> {
        let mut cfg = TrainConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected 'key = value', got '{raw}'", ln + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| ConfigError(format!("line {}: bad {what} '{value}'", ln + 1));
            match key {
                "variant" => cfg.variant = Variant::parse(value)?,
                "epochs_constant" => {
                    cfg.epochs_constant = value.parse().map_err(|_| bad("integer"))?
                }
                "epochs_decay" => cfg.epochs_decay = value.parse().map_err(|_| bad("integer"))?,
                "lr_task" => cfg.lr_task = value.parse().map_err(|_| bad("float"))?,
                "lr_translation" => {
                    cfg.lr_translation = value.parse().map_err(|_| bad("float"))?
                }
                "adam_adv_beta1" => cfg.adam_adv.0 = value.parse().map_err(|_| bad("float"))?,
                "adam_adv_beta2" => cfg.adam_adv.1 = value.parse().map_err(|_| bad("float"))?,
                "adam_task_beta1" => cfg.adam_task.0 = value.parse().map_err(|_| bad("float"))?,
                "adam_task_beta2" => cfg.adam_task.1 = value.parse().map_err(|_| bad("float"))?,
                "g_per_d_updates" => {
                    cfg.g_per_d_updates = value.parse().map_err(|_| bad("integer"))?
                }
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("integer"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                "alpha_f" => cfg.weights.alpha_f = value.parse().map_err(|_| bad("float"))?,
                "alpha_r" => cfg.weights.alpha_r = value.parse().map_err(|_| bad("float"))?,
                "alpha_t" => cfg.weights.alpha_t = value.parse().map_err(|_| bad("float"))?,
                "alpha_s" => cfg.weights.alpha_s = value.parse().map_err(|_| bad("float"))?,
                "d_cap" => cfg.d_cap = value.parse().map_err(|_| bad("float"))?,
                "feature_gan_mirrored" => {
                    cfg.feature_gan_mirrored = value.parse().map_err(|_| bad("bool"))?
                }
                other => {
                    return Err(ConfigError(format!("line {}: unknown key '{other}'", ln + 1)))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<TrainConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolved `key = value` snapshot; parses back to an identical config.
    pub fn snapshot(&self) -> String {
        format!(
            "variant = {}\nepochs_constant = {}\nepochs_decay = {}\nlr_task = {}\nlr_translation = {}\nadam_adv_beta1 = {}\nadam_adv_beta2 = {}\nadam_task_beta1 = {}\nadam_task_beta2 = {}\ng_per_d_updates = {}\nbatch_size = {}\nseed = {}\nalpha_f = {}\nalpha_r = {}\nalpha_t = {}\nalpha_s = {}\nd_cap = {}\nfeature_gan_mirrored = {}\n",
            self.variant,
            self.epochs_constant,
            self.epochs_decay,
            self.lr_task,
            self.lr_translation,
            self.adam_adv.0,
            self.adam_adv.1,
            self.adam_task.0,
            self.adam_task.1,
            self.g_per_d_updates,
            self.batch_size,
            self.seed,
            self.weights.alpha_f,
            self.weights.alpha_r,
            self.weights.alpha_t,
            self.weights.alpha_s,
            self.d_cap,
            self.feature_gan_mirrored,
        )
    }
}

/// Epoch learning-rate factor: constant for the first block, then linear
/// decay that would reach zero one epoch past the schedule (the final
/// executed epoch runs at `1/(epochs_decay + 1)` of the base rate).
pub fn lr_schedule(epoch: usize, base_lr: f64, config: &TrainConfig) -> f64 {
    assert!(
        epoch < config.total_epochs(),
        "epoch {epoch} outside schedule of {} epochs",
        config.total_epochs()
    );
    if epoch < config.epochs_constant {
        base_lr
    } else {
        let into_decay = (epoch + 1 - config.epochs_constant) as f64;
        base_lr * (1.0 - into_decay / (config.epochs_decay as f64 + 1.0))
    }
}
