//! 2-D convolution (cross-correlation), nearest-neighbor upsampling and
//! average pooling.
//!
//! Convolution lowers each image to a column matrix and runs a GEMM.
//! Images in a batch are independent, so per-image work is split across
//! worker threads; per-image kernel gradients are summed in image order
//! afterwards, which keeps results identical for any thread count. When a
//! kernel gradient will be needed, the forward pass keeps the column
//! matrices alive so the backward pass does not rebuild them.

use super::elem::gemm_rowmajor;
use super::parallel::{maybe_ranges, split_by_ranges};
use super::{Elem, Op, Result, Tensor, TensorError};

#[cfg(feature = "timing")]
macro_rules! timed {
    ($counter:ident, $body:expr) => {{
        let t0 = std::time::Instant::now();
        let r = $body;
        super::timing::add(&super::timing::$counter, t0);
        r
    }};
}
#[cfg(not(feature = "timing"))]
macro_rules! timed {
    ($counter:ident, $body:expr) => {
        $body
    };
}

pub struct Conv2dCtx<E: Elem> {
    pub input: Tensor<E>,
    pub kernel: Tensor<E>,
    pub bias: Tensor<E>,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Per-image column matrices, kept when the kernel needs gradients.
    pub(crate) cols: Vec<Vec<E>>,
}

fn conv_out_dim(in_dim: usize, k: usize, stride: usize, padding: usize, dilation: usize) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = in_dim + 2 * padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / stride + 1)
}

/// Valid output-column range for one kernel tap: `wo` such that
/// `wo*stride + off` lands inside `[0, w)`, where `off = kj*dilation - padding`.
#[inline]
fn valid_wo_range(out_w: usize, w: usize, stride: usize, off: isize) -> (usize, usize) {
    let lo = if off >= 0 {
        0
    } else {
        ((-off) as usize).div_ceil(stride)
    };
    let hi_excl = if (w as isize) <= off {
        0
    } else {
        ((w as isize - 1 - off) as usize / stride + 1).min(out_w)
    };
    (lo.min(out_w), hi_excl)
}

/// Fill `col` with the unrolled patches of one image.
///
/// `col` is `(C*kh*kw) x (out_h*out_w)` row-major; out-of-bounds taps are
/// zero. Every entry is written, so the buffer may be reused across images.
#[allow(clippy::too_many_arguments)]
fn im2col<E: Elem>(
    img: &[E],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    out_h: usize,
    out_w: usize,
    col: &mut [E],
) {
    let plane = h * w;
    let out_plane = out_h * out_w;
    for ci in 0..c {
        let img_c = &img[ci * plane..(ci + 1) * plane];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * out_plane;
                let off_w = (kj * dilation) as isize - padding as isize;
                let (lo, hi) = valid_wo_range(out_w, w, stride, off_w);
                for ho in 0..out_h {
                    let ih = (ho * stride + ki * dilation) as isize - padding as isize;
                    let dst = &mut col[row + ho * out_w..row + (ho + 1) * out_w];
                    if ih < 0 || ih >= h as isize || lo >= hi {
                        dst.fill(E::ZERO);
                        continue;
                    }
                    let src_row = &img_c[ih as usize * w..(ih as usize + 1) * w];
                    dst[..lo].fill(E::ZERO);
                    dst[hi..].fill(E::ZERO);
                    if stride == 1 {
                        let s0 = (lo as isize + off_w) as usize;
                        dst[lo..hi].copy_from_slice(&src_row[s0..s0 + (hi - lo)]);
                    } else {
                        for (wo, d) in dst[lo..hi].iter_mut().enumerate() {
                            *d = src_row[((lo + wo) * stride).wrapping_add_signed(off_w)];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back onto an image (transpose of `im2col`).
#[allow(clippy::too_many_arguments)]
fn col2im_add<E: Elem>(
    col: &[E],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    out_h: usize,
    out_w: usize,
    img: &mut [E],
) {
    let plane = h * w;
    let out_plane = out_h * out_w;
    for ci in 0..c {
        let img_c = &mut img[ci * plane..(ci + 1) * plane];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((ci * kh + ki) * kw + kj) * out_plane;
                let off_w = (kj * dilation) as isize - padding as isize;
                let (lo, hi) = valid_wo_range(out_w, w, stride, off_w);
                if lo >= hi {
                    continue;
                }
                for ho in 0..out_h {
                    let ih = (ho * stride + ki * dilation) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src = &col[row + ho * out_w..row + (ho + 1) * out_w];
                    let dst_row = &mut img_c[ih as usize * w..(ih as usize + 1) * w];
                    if stride == 1 {
                        let s0 = (lo as isize + off_w) as usize;
                        for (d, &s) in dst_row[s0..s0 + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                            *d = *d + s;
                        }
                    } else {
                        for (wo, &s) in src[lo..hi].iter().enumerate() {
                            let iw = ((lo + wo) * stride).wrapping_add_signed(off_w);
                            dst_row[iw] = dst_row[iw] + s;
                        }
                    }
                }
            }
        }
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }
    fn in_plane(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Forward for a contiguous range of images. `col_store`, when given, holds
/// one buffer per image in the range and keeps the built columns.
fn conv_forward_images<E: Elem>(
    imgs: &[E],
    first: usize,
    outs: &mut [&mut [E]],
    mut col_store: Option<&mut [Vec<E>]>,
    kd: &[E],
    bd: &[E],
    g: &ConvGeom,
) {
    let ckk = g.ckk();
    let out_plane = g.out_plane();
    let mut scratch = if col_store.is_none() {
        vec![E::ZERO; ckk * out_plane]
    } else {
        Vec::new()
    };
    for (i, out_n) in outs.iter_mut().enumerate() {
        let ni = first + i;
        let col: &mut [E] = match col_store.as_deref_mut() {
            Some(store) => {
                store[i].resize(ckk * out_plane, E::ZERO);
                &mut store[i]
            }
            None => &mut scratch,
        };
        timed!(IM2COL_NS, im2col(
            &imgs[ni * g.in_plane()..(ni + 1) * g.in_plane()],
            g.c, g.h, g.w, g.kh, g.kw, g.stride, g.padding, g.dilation, g.out_h, g.out_w, col,
        ));
        timed!(GEMM_NS, gemm_rowmajor(
            g.f, ckk, out_plane, E::ONE, kd, false, col, false, E::ZERO, out_n,
        ));
        for fi in 0..g.f {
            let b = bd[fi];
            for v in &mut out_n[fi * out_plane..(fi + 1) * out_plane] {
                *v = *v + b;
            }
        }
    }
}

/// Strided cross-correlation of `input [N,C,H,W]` with `kernel [F,C,kh,kw]`
/// plus per-filter bias. Differentiable w.r.t. input, kernel and bias.
pub fn conv2d<E: Elem>(
    input: &Tensor<E>,
    kernel: &Tensor<E>,
    bias: &Tensor<E>,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Result<Tensor<E>> {
    let ish = input.shape();
    let ksh = kernel.shape();
    if ish.len() != 4 {
        return Err(TensorError::BadDimension {
            op: "conv2d",
            message: format!("input must be 4-d [N,C,H,W], got {ish:?}"),
        });
    }
    if ksh.len() != 4 {
        return Err(TensorError::BadDimension {
            op: "conv2d",
            message: format!("kernel must be 4-d [F,C,kh,kw], got {ksh:?}"),
        });
    }
    let (n, c, h, w) = (ish[0], ish[1], ish[2], ish[3]);
    let (f, kc, kh, kw) = (ksh[0], ksh[1], ksh[2], ksh[3]);
    if kc != c {
        return Err(TensorError::BadDimension {
            op: "conv2d",
            message: format!("kernel channel dimension is {kc} but input has {c} channels"),
        });
    }
    if bias.shape() != [f] {
        return Err(TensorError::BadDimension {
            op: "conv2d",
            message: format!(
                "bias dimension is {:?} but kernel has {f} filters",
                bias.shape()
            ),
        });
    }
    if stride == 0 || dilation == 0 {
        return Err(TensorError::BadDimension {
            op: "conv2d",
            message: format!("stride ({stride}) and dilation ({dilation}) must be >= 1"),
        });
    }
    let out_h = conv_out_dim(h, kh, stride, padding, dilation).ok_or_else(|| {
        TensorError::BadDimension {
            op: "conv2d",
            message: format!(
                "input height {h} too small for kernel height {kh} at dilation {dilation}, padding {padding}"
            ),
        }
    })?;
    let out_w = conv_out_dim(w, kw, stride, padding, dilation).ok_or_else(|| {
        TensorError::BadDimension {
            op: "conv2d",
            message: format!(
                "input width {w} too small for kernel width {kw} at dilation {dilation}, padding {padding}"
            ),
        }
    })?;

    let geom = ConvGeom {
        c,
        h,
        w,
        f,
        kh,
        kw,
        stride,
        padding,
        dilation,
        out_h,
        out_w,
    };
    // Keeping columns for the backward pass trades ~0.5 GB of residency for
    // an im2col rebuild; on this memory-bound profile the rebuild is
    // cheaper, so the cache stays off.
    const CACHE_COLS: bool = false;
    let keep_cols = CACHE_COLS && super::grad_enabled() && kernel.tracked();
    let out_plane = out_h * out_w;
    let mut out = vec![E::ZERO; n * f * out_plane];
    let mut cols_all: Vec<Vec<E>> = if keep_cols {
        (0..n).map(|_| Vec::new()).collect()
    } else {
        Vec::new()
    };
    {
        let img = input.data();
        let kd = kernel.data();
        let bd = bias.data();
        let ranges = maybe_ranges(n, f * out_plane * geom.ckk());
        let mut out_chunks: Vec<&mut [E]> = split_by_ranges(&mut out, &ranges, f * out_plane);
        let mut col_chunks: Vec<&mut [Vec<E>]> = if keep_cols {
            split_by_ranges(&mut cols_all, &ranges, 1)
        } else {
            Vec::new()
        };
        if ranges.len() <= 1 {
            let whole = out_chunks.pop().unwrap();
            let mut outs: Vec<&mut [E]> = whole.chunks_mut(f * out_plane).collect();
            conv_forward_images(&img, 0, &mut outs, col_chunks.pop(), &kd, &bd, &geom);
        } else {
            std::thread::scope(|scope| {
                for (ri, range) in ranges.iter().enumerate() {
                    let outs = std::mem::take(&mut out_chunks[ri]);
                    let mut outs_vec: Vec<&mut [E]> = vec![&mut *outs];
                    // split each range's flat slice back into per-image slices
                    outs_vec = {
                        let whole = outs_vec.pop().unwrap();
                        whole.chunks_mut(f * out_plane).collect()
                    };
                    let cols = if keep_cols {
                        Some(std::mem::take(&mut col_chunks[ri]))
                    } else {
                        None
                    };
                    let imgs: &[E] = &img;
                    let kd: &[E] = &kd;
                    let bd: &[E] = &bd;
                    let geom = &geom;
                    let first = range.start;
                    scope.spawn(move || {
                        conv_forward_images(imgs, first, &mut outs_vec, cols, kd, bd, geom);
                    });
                }
            });
        }
    }

    Ok(Tensor::from_op(
        vec![n, f, out_h, out_w],
        out,
        Op::Conv2d(Conv2dCtx {
            input: input.clone(),
            kernel: kernel.clone(),
            bias: bias.clone(),
            stride,
            padding,
            dilation,
            out_h,
            out_w,
            cols: cols_all,
        }),
    ))
}

/// Backward for a contiguous range of images: per-image kernel gradients
/// land in disjoint `dk` buffers, input gradients in disjoint `di` buffers.
#[allow(clippy::too_many_arguments)]
fn conv_backward_images<E: Elem>(
    imgs: &[E],
    up: &[E],
    first: usize,
    count: usize,
    dk: &mut [&mut [E]],
    di: &mut [&mut [E]],
    cached_cols: &[Vec<E>],
    kd: &[E],
    g: &ConvGeom,
) {
    let ckk = g.ckk();
    let out_plane = g.out_plane();
    let need_kernel = !dk.is_empty();
    let need_input = !di.is_empty();
    let use_cache = !cached_cols.is_empty();
    let mut col_scratch = if need_kernel && !use_cache {
        vec![E::ZERO; ckk * out_plane]
    } else {
        Vec::new()
    };
    let mut dcol = if need_input {
        vec![E::ZERO; ckk * out_plane]
    } else {
        Vec::new()
    };
    for i in 0..count {
        let ni = first + i;
        let up_n = &up[ni * g.f * out_plane..(ni + 1) * g.f * out_plane];
        if need_kernel {
            let col: &[E] = if use_cache {
                &cached_cols[ni]
            } else {
                timed!(IM2COL_NS, im2col(
                    &imgs[ni * g.in_plane()..(ni + 1) * g.in_plane()],
                    g.c, g.h, g.w, g.kh, g.kw, g.stride, g.padding, g.dilation,
                    g.out_h, g.out_w, &mut col_scratch,
                ));
                &col_scratch
            };
            // dK_n = dOut_n * col^T
            timed!(GEMM_NS, gemm_rowmajor(
                g.f, out_plane, ckk, E::ONE, up_n, false, col, true, E::ZERO, dk[i],
            ));
        }
        if need_input {
            // dcol = K^T * dOut_n, scattered back to image space
            timed!(GEMM_NS, gemm_rowmajor(
                ckk, g.f, out_plane, E::ONE, kd, true, up_n, false, E::ZERO, &mut dcol,
            ));
            timed!(COL2IM_NS, col2im_add(
                &dcol, g.c, g.h, g.w, g.kh, g.kw, g.stride, g.padding, g.dilation,
                g.out_h, g.out_w, di[i],
            ));
        }
    }
}

pub(crate) fn conv2d_backward<E: Elem>(ctx: &Conv2dCtx<E>, up: &[E]) {
    let ish = ctx.input.shape().to_vec();
    let ksh = ctx.kernel.shape().to_vec();
    let (n, c, h, w) = (ish[0], ish[1], ish[2], ish[3]);
    let (f, _, kh, kw) = (ksh[0], ksh[1], ksh[2], ksh[3]);
    let geom = ConvGeom {
        c,
        h,
        w,
        f,
        kh,
        kw,
        stride: ctx.stride,
        padding: ctx.padding,
        dilation: ctx.dilation,
        out_h: ctx.out_h,
        out_w: ctx.out_w,
    };
    let ckk = geom.ckk();
    let out_plane = geom.out_plane();

    let need_input = ctx.input.tracked();
    let need_kernel = ctx.kernel.tracked();
    let need_bias = ctx.bias.tracked();

    if need_bias {
        let mut db = vec![E::ZERO; f];
        for ni in 0..n {
            for fi in 0..f {
                let s = up[(ni * f + fi) * out_plane..(ni * f + fi + 1) * out_plane]
                    .iter()
                    .fold(E::ZERO, |acc, &g| acc + g);
                db[fi] = db[fi] + s;
            }
        }
        ctx.bias.accumulate_grad(&db);
    }
    if !need_input && !need_kernel {
        return;
    }

    let img = ctx.input.data();
    let kd = ctx.kernel.data();
    let mut dkernel_all = if need_kernel {
        vec![E::ZERO; n * f * ckk]
    } else {
        Vec::new()
    };
    let mut dinput = if need_input {
        vec![E::ZERO; n * c * h * w]
    } else {
        Vec::new()
    };

    {
        let ranges = maybe_ranges(n, f * out_plane * ckk);
        let mut dk_chunks: Vec<&mut [E]> = if need_kernel {
            split_by_ranges(&mut dkernel_all, &ranges, f * ckk)
        } else {
            Vec::new()
        };
        let mut di_chunks: Vec<&mut [E]> = if need_input {
            split_by_ranges(&mut dinput, &ranges, c * h * w)
        } else {
            Vec::new()
        };
        if ranges.len() <= 1 {
            let mut dks: Vec<&mut [E]> = match dk_chunks.pop() {
                Some(chunk) => chunk.chunks_mut(f * ckk).collect(),
                None => Vec::new(),
            };
            let mut dis: Vec<&mut [E]> = match di_chunks.pop() {
                Some(chunk) => chunk.chunks_mut(c * h * w).collect(),
                None => Vec::new(),
            };
            conv_backward_images(&img, up, 0, n, &mut dks, &mut dis, &ctx.cols, &kd, &geom);
        } else {
            std::thread::scope(|scope| {
                for (ri, range) in ranges.iter().enumerate() {
                    let mut dks: Vec<&mut [E]> = if need_kernel {
                        std::mem::take(&mut dk_chunks[ri])
                            .chunks_mut(f * ckk)
                            .collect()
                    } else {
                        Vec::new()
                    };
                    let mut dis: Vec<&mut [E]> = if need_input {
                        std::mem::take(&mut di_chunks[ri])
                            .chunks_mut(c * h * w)
                            .collect()
                    } else {
                        Vec::new()
                    };
                    let imgs: &[E] = &img;
                    let kd: &[E] = &kd;
                    let cols: &[Vec<E>] = &ctx.cols;
                    let geom = &geom;
                    let (first, count) = (range.start, range.len());
                    scope.spawn(move || {
                        conv_backward_images(
                            imgs, up, first, count, &mut dks, &mut dis, cols, kd, geom,
                        );
                    });
                }
            });
        }
    }
    drop(img);
    drop(kd);

    if need_kernel {
        // Sum per-image kernel gradients in image order: the reduction
        // order is fixed no matter how images were assigned to threads.
        let mut dkernel = vec![E::ZERO; f * ckk];
        for ni in 0..n {
            let part = &dkernel_all[ni * f * ckk..(ni + 1) * f * ckk];
            for (d, &p) in dkernel.iter_mut().zip(part.iter()) {
                *d = *d + p;
            }
        }
        ctx.kernel.accumulate_grad(&dkernel);
    }
    if need_input {
        ctx.input.accumulate_grad(&dinput);
    }
}

impl<E: Elem> Tensor<E> {
    pub fn conv2d(
        &self,
        kernel: &Tensor<E>,
        bias: &Tensor<E>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Tensor<E>> {
        conv2d(self, kernel, bias, stride, padding, dilation)
    }

    /// Nearest-neighbor 2x upsampling of a [N,C,H,W] tensor.
    pub fn upsample2x(&self) -> Result<Tensor<E>> {
        let sh = self.shape();
        if sh.len() != 4 {
            return Err(TensorError::BadDimension {
                op: "upsample2x",
                message: format!("expected 4-d input, got {sh:?}"),
            });
        }
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let d = self.data();
        let mut out = vec![E::ZERO; n * c * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        for nc in 0..n * c {
            let src = &d[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for i in 0..h {
                for j in 0..w {
                    let v = src[i * w + j];
                    let base = 2 * i * ow + 2 * j;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + ow] = v;
                    dst[base + ow + 1] = v;
                }
            }
        }
        drop(d);
        Ok(Tensor::from_op(
            vec![n, c, oh, ow],
            out,
            Op::Upsample2x(self.clone()),
        ))
    }

    /// Non-overlapping average pooling by an integer factor.
    pub fn avg_pool2d(&self, factor: usize) -> Result<Tensor<E>> {
        let sh = self.shape();
        if sh.len() != 4 {
            return Err(TensorError::BadDimension {
                op: "avg_pool2d",
                message: format!("expected 4-d input, got {sh:?}"),
            });
        }
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(TensorError::BadDimension {
                op: "avg_pool2d",
                message: format!("spatial dims {h}x{w} not divisible by factor {factor}"),
            });
        }
        if factor == 1 {
            // Identity; still recorded so gradients pass through.
            return Ok(self.mul_scalar(E::ONE));
        }
        let (oh, ow) = (h / factor, w / factor);
        let inv = E::ONE / E::from_f64((factor * factor) as f64);
        let d = self.data();
        let mut out = vec![E::ZERO; n * c * oh * ow];
        for nc in 0..n * c {
            let src = &d[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = E::ZERO;
                    for di in 0..factor {
                        for dj in 0..factor {
                            acc = acc + src[(i * factor + di) * w + j * factor + dj];
                        }
                    }
                    dst[i * ow + j] = acc * inv;
                }
            }
        }
        drop(d);
        Ok(Tensor::from_op(
            vec![n, c, oh, ow],
            out,
            Op::AvgPool2d(self.clone(), factor),
        ))
    }
}

pub(crate) fn upsample2x_backward<E: Elem>(input: &Tensor<E>, up: &[E]) {
    let sh = input.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let (oh, ow) = (2 * h, 2 * w);
    let mut grad = vec![E::ZERO; n * c * h * w];
    for nc in 0..n * c {
        let src = &up[nc * oh * ow..(nc + 1) * oh * ow];
        let dst = &mut grad[nc * h * w..(nc + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let base = 2 * i * ow + 2 * j;
                dst[i * w + j] =
                    src[base] + src[base + 1] + src[base + ow] + src[base + ow + 1];
            }
        }
    }
    input.accumulate_grad(&grad);
}

pub(crate) fn avg_pool2d_backward<E: Elem>(input: &Tensor<E>, factor: usize, up: &[E]) {
    let sh = input.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let (oh, ow) = (h / factor, w / factor);
    let inv = E::ONE / E::from_f64((factor * factor) as f64);
    let mut grad = vec![E::ZERO; n * c * h * w];
    for nc in 0..n * c {
        let src = &up[nc * oh * ow..(nc + 1) * oh * ow];
        let dst = &mut grad[nc * h * w..(nc + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                let g = src[i * ow + j] * inv;
                for di in 0..factor {
                    for dj in 0..factor {
                        dst[(i * factor + di) * w + j * factor + dj] = g;
                    }
                }
            }
        }
    }
    input.accumulate_grad(&grad);
}
