//! The loss terms of the joint objective, under the least-squares GAN
//! substitution: image GAN, feature GAN, target-domain reconstruction,
//! multi-scale task supervision, and edge-aware smoothness; plus the
//! weighted total on the generator/task side.

use crate::nets::DepthPrediction;
use crate::tensor::{l1_loss, smoothness_loss as smoothness_op, Elem, Result, Tensor, TensorError};

/// Weights of the full objective. The indoor profile is the default at
/// desk scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_f: f64,
    pub alpha_r: f64,
    pub alpha_t: f64,
    pub alpha_s: f64,
}

impl LossWeights {
    pub fn indoor() -> Self {
        LossWeights {
            alpha_f: 0.1,
            alpha_r: 40.0,
            alpha_t: 20.0,
            alpha_s: 0.01,
        }
    }

    pub fn outdoor() -> Self {
        LossWeights {
            alpha_f: 0.1,
            alpha_r: 100.0,
            alpha_t: 100.0,
            alpha_s: 0.01,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("alpha_f", self.alpha_f),
            ("alpha_r", self.alpha_r),
            ("alpha_t", self.alpha_t),
            ("alpha_s", self.alpha_s),
        ] {
            if !(v >= 0.0) {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::indoor()
    }
}

/// Per-term scalar values for one step. Terms a variant does not compute
/// stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub gan_g: f64,
    pub gan_d: f64,
    pub gan_feat_g: f64,
    pub gan_feat_d: f64,
    pub recon: f64,
    pub task: f64,
    pub smooth: f64,
    pub total_g_side: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str =
        "step,gan_g,gan_d,gan_feat_g,gan_feat_d,recon,task,smooth,total_g_side";

    pub fn csv_row(&self, step: u64) -> String {
        format!(
            "{step},{},{},{},{},{},{},{},{}",
            self.gan_g,
            self.gan_d,
            self.gan_feat_g,
            self.gan_feat_d,
            self.recon,
            self.task,
            self.smooth,
            self.total_g_side
        )
    }
}

/// Generator-side least-squares GAN loss: mean((score - 1)^2).
pub fn lsgan_g_loss<E: Elem>(fake_scores: &Tensor<E>) -> Tensor<E> {
    fake_scores.add_scalar(E::ZERO - E::ONE).square().mean()
}

/// Discriminator-side least-squares GAN loss:
/// mean((real - 1)^2) + mean(fake^2).
pub fn lsgan_d_loss<E: Elem>(real_scores: &Tensor<E>, fake_scores: &Tensor<E>) -> Result<Tensor<E>> {
    let real_term = real_scores.add_scalar(E::ZERO - E::ONE).square().mean();
    let fake_term = fake_scores.square().mean();
    real_term.add(&fake_term)
}

/// Target-domain reconstruction: mean absolute difference between the
/// translated real image and the real image itself.
pub fn reconstruction_loss<E: Elem>(translated: &Tensor<E>, real: &Tensor<E>) -> Result<Tensor<E>> {
    l1_loss(translated, real)
}

/// Multi-scale task loss: ground truth is average-pooled to each predicted
/// scale, per-scale mean-L1 terms are averaged with equal weights.
pub fn task_loss<E: Elem>(pred: &DepthPrediction<E>, gt_depth: &Tensor<E>) -> Result<Tensor<E>> {
    let gsh = gt_depth.shape();
    if gsh.len() != 4 || gsh[1] != 1 {
        return Err(TensorError::BadDimension {
            op: "task_loss",
            message: format!("ground truth must be [N,1,H,W], got {gsh:?}"),
        });
    }
    let (gh, gw) = (gsh[2], gsh[3]);
    let mut total: Option<Tensor<E>> = None;
    for d in &pred.depths {
        let dsh = d.shape();
        let (ph, pw) = (dsh[2], dsh[3]);
        if ph == 0 || pw == 0 || gh % ph != 0 || gw % pw != 0 || gh / ph != gw / pw {
            return Err(TensorError::BadDimension {
                op: "task_loss",
                message: format!(
                    "prediction {ph}x{pw} is not an integer scale of ground truth {gh}x{gw}"
                ),
            });
        }
        let factor = gh / ph;
        let pooled = gt_depth.avg_pool2d(factor)?;
        let term = l1_loss(d, &pooled)?;
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    let inv_scales = E::ONE / E::from_f64(pred.depths.len() as f64);
    Ok(total.expect("four depth heads").mul_scalar(inv_scales))
}

/// Edge-aware smoothness on the full-resolution prediction only.
pub fn smoothness_loss<E: Elem>(pred: &DepthPrediction<E>, image: &Tensor<E>) -> Result<Tensor<E>> {
    let full = &pred.depths[3];
    if full.shape()[2..] != image.shape()[2..] {
        return Err(TensorError::ShapeMismatch {
            op: "smoothness_loss",
            lhs: full.shape().to_vec(),
            rhs: image.shape().to_vec(),
        });
    }
    smoothness_op(full, image)
}

/// Feature-level GAN with the class assignment written into the objective:
/// the discriminator is trained to score translated-synthetic features as
/// the target class (1) and real-image features as the other class (0);
/// the generator-side pressure pushes real-image features toward the
/// translated distribution. `mirrored` swaps the class assignment for the
/// ablation harness.
pub fn feature_gan_losses<E: Elem>(
    translated_feat_scores: &Tensor<E>,
    real_feat_scores: &Tensor<E>,
    mirrored: bool,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let (target_one, target_zero) = if mirrored {
        (real_feat_scores, translated_feat_scores)
    } else {
        (translated_feat_scores, real_feat_scores)
    };
    let d_side = lsgan_d_loss(target_one, target_zero)?;
    let g_side = lsgan_g_loss(target_zero);
    Ok((g_side, d_side))
}

/// Fill in the weighted generator-side total:
/// gan_g + alpha_f * gan_feat_g + alpha_r * recon + alpha_t * task + alpha_s * smooth.
pub fn total_objective(mut report: LossReport, weights: &LossWeights) -> LossReport {
    report.total_g_side = report.gan_g
        + weights.alpha_f * report.gan_feat_g
        + weights.alpha_r * report.recon
        + weights.alpha_t * report.task
        + weights.alpha_s * report.smooth;
    report
}
