//! Depth evaluation: the seven standard error/accuracy aggregates, the
//! evaluation protocol (prediction clamp, ground-truth cap), and the
//! train-set-mean baseline predictor.
//!
//! Aggregation is pixel-pooled: one sum over every pixel of every image in
//! the set, not a mean of per-image metrics.

use crate::nets::TaskNetF;
use crate::scenegen::{load_batch, DatasetManifest};
use crate::tensor::{no_grad, Tensor};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Total pixel count pooled into the sums.
    pub n_pixels: u64,
}

/// Clamp/cap rules applied before the error formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalProtocol {
    /// Predictions are clamped into this range.
    pub clamp: (f64, f64),
    /// Ground truth is capped at this value when set.
    pub gt_cap: Option<f64>,
    /// Optional crop rectangle (top, left, height, width); none at desk
    /// scale, the hook exists for protocol parity.
    pub crop: Option<(usize, usize, usize, usize)>,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            clamp: (1.0, 10.0),
            gt_cap: None,
            crop: None,
        }
    }
}

#[derive(Debug)]
pub enum EvalError {
    ShapeMismatch { pred: Vec<usize>, gt: Vec<usize> },
    NonPositiveGroundTruth { index: usize, value: f64 },
    MissingDepth { id: String },
    BadProtocol(String),
    Data(crate::scenegen::SceneError),
    Io(std::io::Error),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::ShapeMismatch { pred, gt } => {
                write!(f, "prediction shape {pred:?} does not match ground truth {gt:?}")
            }
            EvalError::NonPositiveGroundTruth { index, value } => {
                write!(f, "non-positive ground-truth depth {value} at pixel {index}")
            }
            EvalError::MissingDepth { id } => {
                write!(f, "sample '{id}' carries no evaluation depth")
            }
            EvalError::BadProtocol(msg) => write!(f, "bad protocol: {msg}"),
            EvalError::Data(e) => write!(f, "{e}"),
            EvalError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<crate::scenegen::SceneError> for EvalError {
    fn from(e: crate::scenegen::SceneError) -> Self {
        EvalError::Data(e)
    }
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;

const DELTA_THRESHOLDS: [f64; 3] = [1.25, 1.5625, 1.953125];

/// Streaming pixel-pooled accumulator, so multi-image evaluation needs no
/// concatenated buffers.
#[derive(Debug, Default, Clone)]
pub struct MetricsAccumulator {
    sum_abs_rel: f64,
    sum_sq_rel: f64,
    sum_sq_err: f64,
    sum_sq_log_err: f64,
    hits: [u64; 3],
    n: u64,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pool one prediction/ground-truth pair. Shapes must match; ground
    /// truth must be strictly positive (the toy data is dense).
    pub fn add(
        &mut self,
        pred: &Tensor<f32>,
        gt: &Tensor<f32>,
        protocol: &EvalProtocol,
    ) -> Result<()> {
        if pred.shape() != gt.shape() {
            return Err(EvalError::ShapeMismatch {
                pred: pred.shape().to_vec(),
                gt: gt.shape().to_vec(),
            });
        }
        let (lo, hi) = protocol.clamp;
        if !(lo > 0.0 && hi > lo) {
            return Err(EvalError::BadProtocol(format!(
                "clamp range ({lo}, {hi}) must be positive and increasing"
            )));
        }
        let pd = pred.data();
        let gd = gt.data();
        for (i, (&p, &g)) in pd.iter().zip(gd.iter()).enumerate() {
            let mut g = g as f64;
            if g <= 0.0 {
                return Err(EvalError::NonPositiveGroundTruth { index: i, value: g });
            }
            if let Some(cap) = protocol.gt_cap {
                g = g.min(cap);
            }
            let p = (p as f64).clamp(lo, hi);
            let err = p - g;
            self.sum_abs_rel += err.abs() / g;
            self.sum_sq_rel += err * err / g;
            self.sum_sq_err += err * err;
            let log_err = p.ln() - g.ln();
            self.sum_sq_log_err += log_err * log_err;
            let ratio = (p / g).max(g / p);
            for (k, thr) in DELTA_THRESHOLDS.iter().enumerate() {
                if ratio < *thr {
                    self.hits[k] += 1;
                }
            }
        }
        self.n += pd.len() as u64;
        Ok(())
    }

    pub fn finish(&self) -> MetricsRecord {
        let n = self.n.max(1) as f64;
        MetricsRecord {
            abs_rel: self.sum_abs_rel / n,
            sq_rel: self.sum_sq_rel / n,
            rmse: (self.sum_sq_err / n).sqrt(),
            rmse_log: (self.sum_sq_log_err / n).sqrt(),
            delta1: self.hits[0] as f64 / n,
            delta2: self.hits[1] as f64 / n,
            delta3: self.hits[2] as f64 / n,
            n_pixels: self.n,
        }
    }
}

/// Metrics over a single prediction/ground-truth pair.
pub fn compute_metrics(
    pred: &Tensor<f32>,
    gt: &Tensor<f32>,
    protocol: &EvalProtocol,
) -> Result<MetricsRecord> {
    let mut acc = MetricsAccumulator::new();
    acc.add(pred, gt, protocol)?;
    Ok(acc.finish())
}

/// Pixelwise mean depth map over a paired split; the baseline predictor
/// returns this map for every input.
pub struct TrainSetMeanBaseline {
    pub mean_depth: Tensor<f32>,
}

impl TrainSetMeanBaseline {
    pub fn fit(manifest: &DatasetManifest) -> Result<Self> {
        if manifest.is_empty() {
            return Err(EvalError::BadProtocol("empty split".into()));
        }
        let indices: Vec<usize> = (0..manifest.len()).collect();
        let mut sum: Option<Vec<f64>> = None;
        let mut shape: Vec<usize> = Vec::new();
        for chunk in indices.chunks(64) {
            for sample in load_batch(manifest, chunk)? {
                let depth = sample.depth.ok_or_else(|| EvalError::MissingDepth {
                    id: sample.id.clone(),
                })?;
                let d = depth.data();
                match sum.as_mut() {
                    Some(acc) => {
                        for (a, &v) in acc.iter_mut().zip(d.iter()) {
                            *a += v as f64;
                        }
                    }
                    None => {
                        shape = depth.shape().to_vec();
                        sum = Some(d.iter().map(|&v| v as f64).collect());
                    }
                }
            }
        }
        let count = manifest.len() as f64;
        let mean: Vec<f32> = sum
            .expect("non-empty split")
            .into_iter()
            .map(|v| (v / count) as f32)
            .collect();
        Ok(TrainSetMeanBaseline {
            mean_depth: Tensor::from_vec(&shape, mean).expect("mean shape"),
        })
    }

    pub fn predict(&self) -> Tensor<f32> {
        Tensor::from_vec(&self.mean_depth.shape().to_vec(), self.mean_depth.to_vec()).unwrap()
    }
}

/// Evaluate a task network over a paired split using the full-resolution
/// head only.
pub fn evaluate_task_net(
    net: &TaskNetF<f32>,
    manifest: &DatasetManifest,
    protocol: &EvalProtocol,
) -> Result<MetricsRecord> {
    let _guard = no_grad();
    let mut acc = MetricsAccumulator::new();
    let indices: Vec<usize> = (0..manifest.len()).collect();
    for chunk in indices.chunks(16) {
        let samples = load_batch(manifest, chunk)?;
        for sample in samples {
            let depth_gt = sample.depth.ok_or_else(|| EvalError::MissingDepth {
                id: sample.id.clone(),
            })?;
            let sh = sample.image.shape().to_vec();
            let batched = Tensor::from_vec(&[1, sh[0], sh[1], sh[2]], sample.image.to_vec())
                .expect("batch reshape");
            let pred = net
                .predict_depth(&batched)
                .map_err(|e| EvalError::BadProtocol(e.to_string()))?;
            let full = &pred.depths[3];
            let gt = Tensor::from_vec(&full.shape().to_vec(), depth_gt.to_vec())
                .map_err(|_| EvalError::ShapeMismatch {
                    pred: full.shape().to_vec(),
                    gt: depth_gt.shape().to_vec(),
                })?;
            acc.add(full, &gt, protocol)?;
        }
    }
    Ok(acc.finish())
}

/// Evaluate the constant-map baseline over a paired split.
pub fn evaluate_baseline(
    baseline: &TrainSetMeanBaseline,
    manifest: &DatasetManifest,
    protocol: &EvalProtocol,
) -> Result<MetricsRecord> {
    let mut acc = MetricsAccumulator::new();
    let indices: Vec<usize> = (0..manifest.len()).collect();
    for chunk in indices.chunks(64) {
        for sample in load_batch(manifest, chunk)? {
            let depth_gt = sample.depth.ok_or_else(|| EvalError::MissingDepth {
                id: sample.id.clone(),
            })?;
            acc.add(&baseline.predict(), &depth_gt, protocol)?;
        }
    }
    Ok(acc.finish())
}

/// Format a float with 6 significant digits (the metrics CSV convention).
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (5 - exp).clamp(0, 17) as usize;
    format!("{v:.decimals$}")
}

pub const METRICS_CSV_HEADER: &str =
    "run,variant,epoch,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3";

/// One metrics CSV row.
pub fn metrics_csv_row(run: &str, variant: &str, epoch: i64, m: &MetricsRecord) -> String {
    format!(
        "{run},{variant},{epoch},{},{},{},{},{},{},{}",
        format_sig6(m.abs_rel),
        format_sig6(m.sq_rel),
        format_sig6(m.rmse),
        format_sig6(m.rmse_log),
        format_sig6(m.delta1),
        format_sig6(m.delta2),
        format_sig6(m.delta3),
    )
}
