//! Procedural two-domain dataset: flat-shaded primitive scenes with exact
//! z-buffer depth for the synthetic domain, and a deterministic photometric
//! perturbation pass (texture, gamma, vignette, sensor noise) that
//! manufactures the "real" domain from the same geometry.
//!
//! Depth carries the learnable signal: shape and ground brightness fall off
//! with distance, so a depth net can work from appearance. The realify pass
//! disturbs exactly that cue, which is what creates the domain gap.

pub mod dataset;
mod export;
mod realify;
pub mod render;

pub use dataset::{
    generate_dataset, load_batch, load_manifest, read_meta_depth_range, DatasetConfig,
    DatasetManifest, ManifestEntry, SPLITS,
};
pub use export::{export_pgm, export_ppm};
pub use realify::{realify, RealifyStyle};
pub use render::{render_synthetic, zbuffer_reference, Scene, SceneConfig, Shape, ShapeKind};

use crate::tensor::Tensor;
use std::fmt;

/// Which distribution a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Synthetic,
    Real,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Synthetic => write!(f, "synthetic"),
            Domain::Real => write!(f, "real"),
        }
    }
}

/// One training example: an RGB image in [0,1], its domain tag, and the
/// depth map when the split carries supervision.
pub struct Sample {
    pub id: String,
    pub domain: Domain,
    /// [3, H, W]
    pub image: Tensor<f32>,
    /// [1, H, W], in [d_min, d_cap]
    pub depth: Option<Tensor<f32>>,
}

/// Errors from generation and dataset I/O.
#[derive(Debug)]
pub enum SceneError {
    /// realify over a sample already tagged real.
    AlreadyReal { id: String },
    /// Output directory exists and is not empty.
    OutputNotEmpty { path: String },
    /// A sample file is missing or malformed; names the sample.
    BadSample { id: String, message: String },
    /// Manifest file malformed.
    BadManifest { path: String, message: String },
    Io(std::io::Error),
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::AlreadyReal { id } => {
                write!(f, "sample '{id}' is already in the real domain")
            }
            SceneError::OutputNotEmpty { path } => {
                write!(f, "output directory '{path}' exists and is not empty (pass overwrite)")
            }
            SceneError::BadSample { id, message } => write!(f, "sample '{id}': {message}"),
            SceneError::BadManifest { path, message } => {
                write!(f, "manifest '{path}': {message}")
            }
            SceneError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for SceneError {}

impl From<std::io::Error> for SceneError {
    fn from(e: std::io::Error) -> Self {
        SceneError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, SceneError>;
