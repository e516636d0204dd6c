//! The synthetic-to-"real" photometric perturbation.
//!
//! Applied in a fixed order: value-noise texture, gamma shift, vignette,
//! additive Gaussian pixel noise, clamp to [0,1]. Geometry and depth pass
//! through untouched; only appearance moves, which is exactly the domain
//! gap a translation network can close.

use super::{Domain, Result, Sample, SceneError};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Perturbation magnitudes. A default style is drawn from a seed; the zero
/// style is the identity transform.
#[derive(Debug, Clone, PartialEq)]
pub struct RealifyStyle {
    /// Value-noise modulation amplitude (fractional, +-).
    pub texture_amp: f32,
    /// Global gamma exponent.
    pub gamma: f32,
    /// Radial darkening at the image corners.
    pub vignette: f32,
    /// Additive Gaussian pixel noise sigma.
    pub noise_sigma: f32,
    /// Drives the noise lattice and the pixel noise stream.
    pub seed: u64,
}

impl RealifyStyle {
    /// Style distribution used for dataset generation: texture +-0.15,
    /// gamma in [0.7, 1.4], vignette up to 25%, sensor noise sigma 0.02.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealifyStyle {
            texture_amp: 0.15,
            gamma: rng.gen_range(0.7..1.4),
            vignette: rng.gen_range(0.10..0.25),
            noise_sigma: 0.02,
            seed,
        }
    }

    /// All perturbation magnitudes zero: realify becomes the identity on
    /// pixel values (the domain tag still flips).
    pub fn identity(seed: u64) -> Self {
        RealifyStyle {
            texture_amp: 0.0,
            gamma: 1.0,
            vignette: 0.0,
            noise_sigma: 0.0,
            seed,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Lattice value in [-1, 1] for an integer cell, keyed by the quantized
/// depth so that separate shapes (distinct constant depths) receive
/// decorrelated textures from the same field.
fn lattice(seed: u64, cx: i64, cy: i64, depth_key: u32) -> f32 {
    let h = splitmix64(
        seed ^ (cx as u64).wrapping_mul(0x8DA6B343)
            ^ (cy as u64).wrapping_mul(0xD8163841)
            ^ (depth_key as u64).wrapping_mul(0xCB1AB31F),
    );
    (h >> 11) as f32 / ((1u64 << 53) as f32) * 2.0 - 1.0
}

const TEXTURE_CELLS: f32 = 8.0;

/// Bilinear value noise at a pixel, selected by that pixel's depth key.
fn value_noise(seed: u64, x: f32, y: f32, w: f32, h: f32, depth_key: u32) -> f32 {
    let fx = x / w * TEXTURE_CELLS;
    let fy = y / h * TEXTURE_CELLS;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let v00 = lattice(seed, x0, y0, depth_key);
    let v10 = lattice(seed, x0 + 1, y0, depth_key);
    let v01 = lattice(seed, x0, y0 + 1, depth_key);
    let v11 = lattice(seed, x0 + 1, y0 + 1, depth_key);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Depth quantization used to key the per-shape texture.
const DEPTH_KEY_BIN: f32 = 0.25;

/// Apply the photometric style to a synthetic sample, producing its
/// real-domain counterpart. The depth buffer is carried over bit-exactly.
pub fn realify(sample: &Sample, style: &RealifyStyle) -> Result<Sample> {
    if sample.domain == Domain::Real {
        return Err(SceneError::AlreadyReal {
            id: sample.id.clone(),
        });
    }
    let sh = sample.image.shape().to_vec();
    let (h, w) = (sh[1], sh[2]);
    let mut img = sample.image.to_vec();
    let depth = sample.depth.as_ref().map(|d| d.to_vec());

    // texture: multiplicative value noise, decorrelated across depth bins
    if style.texture_amp != 0.0 {
        let dref = depth.as_deref();
        for row in 0..h {
            for col in 0..w {
                let key = match dref {
                    Some(d) => (d[row * w + col] / DEPTH_KEY_BIN) as u32,
                    None => 0,
                };
                let n = value_noise(
                    style.seed,
                    col as f32 + 0.5,
                    row as f32 + 0.5,
                    w as f32,
                    h as f32,
                    key,
                );
                let factor = 1.0 + style.texture_amp * n;
                for ch in 0..3 {
                    img[ch * h * w + row * w + col] *= factor;
                }
            }
        }
    }

    // gamma
    if style.gamma != 1.0 {
        for v in img.iter_mut() {
            *v = v.max(0.0).powf(style.gamma);
        }
    }

    // vignette
    if style.vignette != 0.0 {
        let cx = w as f32 / 2.0;
        let cy = h as f32 / 2.0;
        let r_max_sq = cx * cx + cy * cy;
        for row in 0..h {
            for col in 0..w {
                let dx = col as f32 + 0.5 - cx;
                let dy = row as f32 + 0.5 - cy;
                let factor = 1.0 - style.vignette * (dx * dx + dy * dy) / r_max_sq;
                for ch in 0..3 {
                    img[ch * h * w + row * w + col] *= factor;
                }
            }
        }
    }

    // additive sensor noise
    if style.noise_sigma != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(style.seed ^ 0x4E4F495345));
        for v in img.iter_mut() {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            *v += style.noise_sigma * z as f32;
        }
    }

    for v in img.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }

    Ok(Sample {
        id: sample.id.clone(),
        domain: Domain::Real,
        image: Tensor::from_vec(&sh, img).unwrap(),
        depth: sample.depth.as_ref().map(|d| {
            Tensor::from_vec(d.shape(), d.to_vec()).unwrap()
        }),
    })
}
