//! In-memory training data: whole splits are decoded once up front (the
//! desk-scale datasets fit easily), batches are assembled per step, and an
//! audit trail records which splits and depth sets ever fed a training
//! step.

use super::TrainError;
use crate::scenegen::{load_batch, load_manifest, DatasetManifest};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub struct SplitData {
    pub manifest: DatasetManifest,
    pub height: usize,
    pub width: usize,
    images: Vec<Vec<f32>>,
    depths: Vec<Option<Vec<f32>>>,
}

/// What a training run read, for the data-isolation audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataAuditEntry {
    pub split: String,
    pub depth_used: bool,
}

impl SplitData {
    pub fn load(root: &Path, split: &str, with_depth: bool) -> Result<SplitData, TrainError> {
        let manifest = load_manifest(root, split)?;
        if manifest.is_empty() {
            return Err(TrainError::Config(format!("split '{split}' is empty")));
        }
        let indices: Vec<usize> = (0..manifest.len()).collect();
        let mut images = Vec::with_capacity(manifest.len());
        let mut depths = Vec::with_capacity(manifest.len());
        let mut height = 0;
        let mut width = 0;
        for chunk in indices.chunks(128) {
            for sample in load_batch(&manifest, chunk)? {
                let sh = sample.image.shape();
                height = sh[1];
                width = sh[2];
                images.push(sample.image.to_vec());
                if with_depth {
                    depths.push(sample.depth.map(|d| d.to_vec()));
                } else {
                    depths.push(None);
                }
            }
        }
        Ok(SplitData {
            manifest,
            height,
            width,
            images,
            depths,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn sample_id(&self, index: usize) -> &str {
        &self.manifest.entries[index].id
    }

    /// Assemble a [B,3,H,W] image batch.
    pub fn image_batch(&self, indices: &[usize]) -> Tensor<f32> {
        let plane = 3 * self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            data.extend_from_slice(&self.images[i]);
        }
        Tensor::from_vec(&[indices.len(), 3, self.height, self.width], data).expect("batch shape")
    }

    /// Assemble a [B,1,H,W] depth batch; requires every index to be paired.
    pub fn depth_batch(&self, indices: &[usize]) -> Result<Tensor<f32>, TrainError> {
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            let d = self.depths[i].as_ref().ok_or_else(|| {
                TrainError::Config(format!(
                    "sample '{}' has no depth but the variant requires pairs",
                    self.sample_id(i)
                ))
            })?;
            data.extend_from_slice(d);
        }
        Ok(
            Tensor::from_vec(&[indices.len(), 1, self.height, self.width], data)
                .expect("batch shape"),
        )
    }

    pub fn has_depth(&self) -> bool {
        self.depths.iter().all(|d| d.is_some())
    }
}

const SHUFFLE_SALT: u64 = 0x53485546;

/// Epoch-keyed Fisher-Yates order: stateless, so an interrupted run resumed
/// at an epoch boundary walks the identical sequence of batches.
pub fn epoch_order(seed: u64, split_tag: u64, epoch: usize, len: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ SHUFFLE_SALT.wrapping_mul(0x2545F4914F6CDD1D)
            ^ split_tag.wrapping_mul(0x9E3779B97F4A7C15)
            ^ (epoch as u64).wrapping_mul(0xD1342543DE82EF95),
    );
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}
