//! The four networks of the twin-pipeline framework: the translator G, the
//! image-patch discriminator, the feature discriminator, and the depth task
//! network with its feature tap and four-scale outputs.
//!
//! All parameters are registered by name into a [`ParamSet`] at
//! construction; the structured layer fields share the same tensor handles,
//! so checkpoint loads and optimizer updates act on the live network.

use crate::tensor::{Elem, ParamSet, Result, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draw `n` values from N(0, std^2) via Box-Muller on the ChaCha stream.
fn normal_draws<E: Elem>(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<E> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            E::from_f64(z * std)
        })
        .collect()
}

/// Convolution weights: kernels N(0, 0.02), biases zero.
struct Conv<E: Elem> {
    weight: Tensor<E>,
    bias: Tensor<E>,
    stride: usize,
    padding: usize,
    dilation: usize,
}

impl<E: Elem> Conv<E> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &mut ParamSet<E>,
        rng: &mut ChaCha8Rng,
        name: &str,
        out_ch: usize,
        in_ch: usize,
        k: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Self {
        let weight = Tensor::param(
            &[out_ch, in_ch, k, k],
            normal_draws(rng, out_ch * in_ch * k * k, 0.02),
        )
        .unwrap();
        let bias = Tensor::param(&[out_ch], vec![E::ZERO; out_ch]).unwrap();
        params.push(format!("{name}.w"), weight.clone());
        params.push(format!("{name}.b"), bias.clone());
        Conv {
            weight,
            bias,
            stride,
            padding,
            dilation,
        }
    }

    fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.conv2d(&self.weight, &self.bias, self.stride, self.padding, self.dilation)
    }
}

/// Instance-norm parameters: gain 1, shift 0.
struct Norm<E: Elem> {
    gain: Tensor<E>,
    shift: Tensor<E>,
}

impl<E: Elem> Norm<E> {
    fn new(params: &mut ParamSet<E>, name: &str, ch: usize) -> Self {
        let gain = Tensor::param(&[ch], vec![E::ONE; ch]).unwrap();
        let shift = Tensor::param(&[ch], vec![E::ZERO; ch]).unwrap();
        params.push(format!("{name}.g"), gain.clone());
        params.push(format!("{name}.s"), shift.clone());
        Norm { gain, shift }
    }

    fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.instance_norm(&self.gain, &self.shift)
    }
}

struct ResBlock<E: Elem> {
    conv1: Conv<E>,
    norm1: Norm<E>,
    conv2: Conv<E>,
    norm2: Norm<E>,
}

impl<E: Elem> ResBlock<E> {
    fn new(params: &mut ParamSet<E>, rng: &mut ChaCha8Rng, name: &str, ch: usize) -> Self {
        ResBlock {
            conv1: Conv::new(params, rng, &format!("{name}.conv1"), ch, ch, 3, 1, 1, 1),
            norm1: Norm::new(params, &format!("{name}.norm1"), ch),
            conv2: Conv::new(params, rng, &format!("{name}.conv2"), ch, ch, 3, 1, 1, 1),
            norm2: Norm::new(params, &format!("{name}.norm2"), ch),
        }
    }

    fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = self.norm1.forward(&self.conv1.forward(x)?)?.relu();
        let y = self.norm2.forward(&self.conv2.forward(&y)?)?;
        x.add(&y)
    }
}

/// Residual translator: one downsampling layer, six residual blocks, one
/// upsampling stage, tanh output rescaled to [0,1].
pub struct TranslatorG<E: Elem = f32> {
    params: ParamSet<E>,
    head: Conv<E>,
    head_norm: Norm<E>,
    down: Conv<E>,
    down_norm: Norm<E>,
    blocks: Vec<ResBlock<E>>,
    up: Conv<E>,
    up_norm: Norm<E>,
    out: Conv<E>,
}

pub const TRANSLATOR_RES_BLOCKS: usize = 6;

impl<E: Elem> TranslatorG<E> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let head = Conv::new(&mut params, &mut rng, "head", 32, 3, 7, 1, 3, 1);
        let head_norm = Norm::new(&mut params, "head_norm", 32);
        let down = Conv::new(&mut params, &mut rng, "down", 64, 32, 3, 2, 1, 1);
        let down_norm = Norm::new(&mut params, "down_norm", 64);
        let blocks = (0..TRANSLATOR_RES_BLOCKS)
            .map(|i| ResBlock::new(&mut params, &mut rng, &format!("block{i}"), 64))
            .collect();
        let up = Conv::new(&mut params, &mut rng, "up", 32, 64, 3, 1, 1, 1);
        let up_norm = Norm::new(&mut params, "up_norm", 32);
        let out = Conv::new(&mut params, &mut rng, "out", 3, 32, 7, 1, 3, 1);
        TranslatorG {
            params,
            head,
            head_norm,
            down,
            down_norm,
            blocks,
            up,
            up_norm,
            out,
        }
    }

    pub fn params(&self) -> &ParamSet<E> {
        &self.params
    }

    /// Shape-preserving translation with output in [0,1].
    pub fn translate(&self, image: &Tensor<E>) -> Result<Tensor<E>> {
        let sh = image.shape();
        if sh.len() != 4 || sh[1] != 3 {
            return Err(TensorError::BadDimension {
                op: "translate",
                message: format!("expected [N,3,H,W] input, got {sh:?}"),
            });
        }
        if sh[2] % 2 != 0 || sh[3] % 2 != 0 {
            return Err(TensorError::BadDimension {
                op: "translate",
                message: format!("spatial dims {}x{} must be even", sh[2], sh[3]),
            });
        }
        let y = self.head_norm.forward(&self.head.forward(image)?)?.relu();
        let y = self.down_norm.forward(&self.down.forward(&y)?)?.relu();
        let mut y = y;
        for block in &self.blocks {
            y = block.forward(&y)?;
        }
        let y = y.upsample2x()?;
        let y = self.up_norm.forward(&self.up.forward(&y)?)?.relu();
        let y = self.out.forward(&y)?;
        // tanh in [-1,1] rescaled to [0,1]
        Ok(y.tanh().add_scalar(E::ONE).mul_scalar(E::from_f64(0.5)))
    }
}

/// Patch discriminator over images: stride-2 4x4 convs to a raw score map.
/// No normalization on the first layer; raw scores (least-squares GAN).
pub struct DiscriminatorR<E: Elem = f32> {
    params: ParamSet<E>,
    c1: Conv<E>,
    c2: Conv<E>,
    n2: Norm<E>,
    c3: Conv<E>,
    n3: Norm<E>,
    c4: Conv<E>,
    slope: E,
}

impl<E: Elem> DiscriminatorR<E> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let c1 = Conv::new(&mut params, &mut rng, "c1", 32, 3, 4, 2, 1, 1);
        let c2 = Conv::new(&mut params, &mut rng, "c2", 64, 32, 4, 2, 1, 1);
        let n2 = Norm::new(&mut params, "n2", 64);
        let c3 = Conv::new(&mut params, &mut rng, "c3", 128, 64, 4, 2, 1, 1);
        let n3 = Norm::new(&mut params, "n3", 128);
        let c4 = Conv::new(&mut params, &mut rng, "c4", 1, 128, 4, 1, 1, 1);
        DiscriminatorR {
            params,
            c1,
            c2,
            n2,
            c3,
            n3,
            c4,
            slope: E::from_f64(0.2),
        }
    }

    pub fn params(&self) -> &ParamSet<E> {
        &self.params
    }

    /// Raw patch scores [N,1,h',w'].
    pub fn discriminate(&self, image: &Tensor<E>) -> Result<Tensor<E>> {
        let y = self.c1.forward(image)?.leaky_relu(self.slope);
        let y = self.n2.forward(&self.c2.forward(&y)?)?.leaky_relu(self.slope);
        let y = self.n3.forward(&self.c3.forward(&y)?)?.leaky_relu(self.slope);
        self.c4.forward(&y)
    }
}

/// Discriminator over the task network's feature tap.
pub struct DiscriminatorFeat<E: Elem = f32> {
    params: ParamSet<E>,
    c1: Conv<E>,
    c2: Conv<E>,
    c3: Conv<E>,
    slope: E,
}

impl<E: Elem> DiscriminatorFeat<E> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let c1 = Conv::new(&mut params, &mut rng, "c1", 64, 64, 3, 1, 1, 1);
        let c2 = Conv::new(&mut params, &mut rng, "c2", 128, 64, 3, 2, 1, 1);
        let c3 = Conv::new(&mut params, &mut rng, "c3", 1, 128, 3, 1, 1, 1);
        DiscriminatorFeat {
            params,
            c1,
            c2,
            c3,
            slope: E::from_f64(0.2),
        }
    }

    pub fn params(&self) -> &ParamSet<E> {
        &self.params
    }

    pub fn discriminate(&self, features: &Tensor<E>) -> Result<Tensor<E>> {
        let sh = features.shape();
        if sh.len() != 4 || sh[1] != 64 {
            return Err(TensorError::BadDimension {
                op: "discriminate_feat",
                message: format!("expected the 64-channel feature tap, got {sh:?}"),
            });
        }
        let y = self.c1.forward(features)?.leaky_relu(self.slope);
        let y = self.c2.forward(&y)?.leaky_relu(self.slope);
        self.c3.forward(&y)
    }
}

/// Depth prediction output: four maps at {1/4, 1/4, 1/2, 1/1} of the input
/// resolution plus the encoder feature tap.
pub struct DepthPrediction<E: Elem = f32> {
    /// Ordered coarse-to-fine; the last entry is the full-resolution map.
    pub depths: [Tensor<E>; 4],
    pub feature_tap: Tensor<E>,
}

/// Task network: two stride-2 encoder convs, three dilated blocks (the
/// feature tap), a two-stage decoder with separately weighted skip paths,
/// and four sigmoid-bounded depth heads.
pub struct TaskNetF<E: Elem = f32> {
    params: ParamSet<E>,
    enc1: Conv<E>,
    enc1_norm: Norm<E>,
    enc2: Conv<E>,
    enc2_norm: Norm<E>,
    dil: Vec<(Conv<E>, Norm<E>)>,
    dec0: Conv<E>,
    dec0_norm: Norm<E>,
    dec1: Conv<E>,
    dec1_norm: Norm<E>,
    skip1: Conv<E>,
    dec2: Conv<E>,
    dec2_norm: Norm<E>,
    skip2: Conv<E>,
    head_bottleneck: Conv<E>,
    head_quarter: Conv<E>,
    head_half: Conv<E>,
    head_full: Conv<E>,
    d_min: E,
    d_max: E,
}

pub const TASK_DILATIONS: [usize; 3] = [2, 4, 8];

impl<E: Elem> TaskNetF<E> {
    pub fn new(seed: u64, d_min: f64, d_max: f64) -> Self {
        assert!(d_max > d_min, "depth range must be increasing");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let enc1 = Conv::new(&mut params, &mut rng, "enc1", 32, 3, 3, 2, 1, 1);
        let enc1_norm = Norm::new(&mut params, "enc1_norm", 32);
        let enc2 = Conv::new(&mut params, &mut rng, "enc2", 64, 32, 3, 2, 1, 1);
        let enc2_norm = Norm::new(&mut params, "enc2_norm", 64);
        let dil = TASK_DILATIONS
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                (
                    Conv::new(&mut params, &mut rng, &format!("dil{i}"), 64, 64, 3, 1, d, d),
                    Norm::new(&mut params, &format!("dil{i}_norm"), 64),
                )
            })
            .collect();
        let dec0 = Conv::new(&mut params, &mut rng, "dec0", 64, 64, 3, 1, 1, 1);
        let dec0_norm = Norm::new(&mut params, "dec0_norm", 64);
        let dec1 = Conv::new(&mut params, &mut rng, "dec1", 32, 64, 3, 1, 1, 1);
        let dec1_norm = Norm::new(&mut params, "dec1_norm", 32);
        let skip1 = Conv::new(&mut params, &mut rng, "skip1", 32, 32, 1, 1, 0, 1);
        let dec2 = Conv::new(&mut params, &mut rng, "dec2", 16, 32, 3, 1, 1, 1);
        let dec2_norm = Norm::new(&mut params, "dec2_norm", 16);
        let skip2 = Conv::new(&mut params, &mut rng, "skip2", 16, 3, 1, 1, 0, 1);
        let head_bottleneck = Conv::new(&mut params, &mut rng, "head_bottleneck", 1, 64, 3, 1, 1, 1);
        let head_quarter = Conv::new(&mut params, &mut rng, "head_quarter", 1, 64, 3, 1, 1, 1);
        let head_half = Conv::new(&mut params, &mut rng, "head_half", 1, 32, 3, 1, 1, 1);
        let head_full = Conv::new(&mut params, &mut rng, "head_full", 1, 16, 3, 1, 1, 1);
        TaskNetF {
            params,
            enc1,
            enc1_norm,
            enc2,
            enc2_norm,
            dil,
            dec0,
            dec0_norm,
            dec1,
            dec1_norm,
            skip1,
            dec2,
            dec2_norm,
            skip2,
            head_bottleneck,
            head_quarter,
            head_half,
            head_full,
            d_min: E::from_f64(d_min),
            d_max: E::from_f64(d_max),
        }
    }

    pub fn params(&self) -> &ParamSet<E> {
        &self.params
    }

    pub fn depth_range(&self) -> (f64, f64) {
        (self.d_min.to_f64(), self.d_max.to_f64())
    }

    fn depth_head(&self, conv: &Conv<E>, features: &Tensor<E>) -> Result<Tensor<E>> {
        let span = self.d_max - self.d_min;
        Ok(conv
            .forward(features)?
            .sigmoid()
            .mul_scalar(span)
            .add_scalar(self.d_min))
    }

    /// Predict the four depth maps and return the encoder feature tap.
    pub fn predict_depth(&self, image: &Tensor<E>) -> Result<DepthPrediction<E>> {
        let sh = image.shape();
        if sh.len() != 4 || sh[1] != 3 {
            return Err(TensorError::BadDimension {
                op: "predict_depth",
                message: format!("expected [N,3,H,W] input, got {sh:?}"),
            });
        }
        if sh[2] % 4 != 0 || sh[3] % 4 != 0 {
            return Err(TensorError::BadDimension {
                op: "predict_depth",
                message: format!("spatial dims {}x{} must be divisible by 4", sh[2], sh[3]),
            });
        }
        let e1 = self.enc1_norm.forward(&self.enc1.forward(image)?)?.relu();
        let e2 = self.enc2_norm.forward(&self.enc2.forward(&e1)?)?.relu();
        let mut t = e2;
        for (conv, norm) in &self.dil {
            t = norm.forward(&conv.forward(&t)?)?.relu();
        }
        let tap = t;

        let d0 = self.dec0_norm.forward(&self.dec0.forward(&tap)?)?.relu();
        let u1 = self
            .dec1_norm
            .forward(&self.dec1.forward(&d0.upsample2x()?)?)?
            .relu();
        let f_half = u1.add(&self.skip1.forward(&e1)?)?;
        let u2 = self
            .dec2_norm
            .forward(&self.dec2.forward(&f_half.upsample2x()?)?)?
            .relu();
        let f_full = u2.add(&self.skip2.forward(image)?)?;

        let depths = [
            self.depth_head(&self.head_bottleneck, &tap)?,
            self.depth_head(&self.head_quarter, &d0)?,
            self.depth_head(&self.head_half, &f_half)?,
            self.depth_head(&self.head_full, &f_full)?,
        ];
        Ok(DepthPrediction {
            depths,
            feature_tap: tap,
        })
    }
}
