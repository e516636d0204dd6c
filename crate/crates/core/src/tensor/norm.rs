//! Instance normalization: each (sample, channel) plane is standardized to
//! zero mean / unit variance (with a variance floor), then scaled and
//! shifted by learned per-channel parameters.
//!
//! Planes are independent, so forward and backward are chunked across
//! worker threads. Gain/shift gradients are first written per plane and
//! reduced in plane order afterwards, keeping sums independent of the
//! thread count.

use super::parallel::{maybe_ranges, split_by_ranges};
use super::{Elem, Op, Result, Tensor, TensorError};

/// Variance floor; keeps constant channels finite.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[cfg(feature = "timing")]
macro_rules! norm_timed {
    ($body:expr) => {{
        let t0 = std::time::Instant::now();
        let r = $body;
        crate::tensor::timing::add(&crate::tensor::timing::NORM_NS, t0);
        r
    }};
}
#[cfg(not(feature = "timing"))]
macro_rules! norm_timed {
    ($body:expr) => {
        $body
    };
}

pub struct InstanceNormCtx<E: Elem> {
    pub input: Tensor<E>,
    pub gain: Tensor<E>,
    pub shift: Tensor<E>,
    pub mean: Vec<E>,
    pub invstd: Vec<E>,
}

#[allow(clippy::too_many_arguments)]
fn forward_planes<E: Elem>(
    src_all: &[E],
    first_plane: usize,
    out: &mut [E],
    means: &mut [E],
    invstds: &mut [E],
    gd: &[E],
    sd: &[E],
    c: usize,
    plane: usize,
) {
    let inv_m = E::ONE / E::from_f64(plane as f64);
    let eps = E::from_f64(INSTANCE_NORM_EPS);
    for (i, (dst, (mean_slot, invstd_slot))) in out
        .chunks_mut(plane)
        .zip(means.iter_mut().zip(invstds.iter_mut()))
        .enumerate()
    {
        let nc = first_plane + i;
        let src = &src_all[nc * plane..(nc + 1) * plane];
        let mut mu = E::ZERO;
        for &x in src {
            mu = mu + x;
        }
        mu = mu * inv_m;
        let mut var = E::ZERO;
        for &x in src {
            let dlt = x - mu;
            var = var + dlt * dlt;
        }
        var = var * inv_m;
        let invstd = E::ONE / (var + eps).sqrt();
        *mean_slot = mu;
        *invstd_slot = invstd;
        let g = gd[nc % c];
        let s = sd[nc % c];
        for (o, &x) in dst.iter_mut().zip(src.iter()) {
            *o = (x - mu) * invstd * g + s;
        }
    }
}

pub fn instance_norm<E: Elem>(
    input: &Tensor<E>,
    gain: &Tensor<E>,
    shift: &Tensor<E>,
) -> Result<Tensor<E>> {
    let sh = input.shape();
    if sh.len() != 4 {
        return Err(TensorError::BadDimension {
            op: "instance_norm",
            message: format!("expected 4-d input, got {sh:?}"),
        });
    }
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    if h * w < 2 {
        return Err(TensorError::BadDimension {
            op: "instance_norm",
            message: format!("spatial plane {h}x{w} must have at least 2 elements"),
        });
    }
    if gain.shape() != [c] || shift.shape() != [c] {
        return Err(TensorError::BadDimension {
            op: "instance_norm",
            message: format!(
                "gain {:?} / shift {:?} must both be [{c}]",
                gain.shape(),
                shift.shape()
            ),
        });
    }
    let plane = h * w;
    let planes = n * c;
    let d = input.data();
    let gd = gain.data();
    let sd = shift.data();
    let mut out = vec![E::ZERO; d.len()];
    let mut means = vec![E::ZERO; planes];
    let mut invstds = vec![E::ZERO; planes];
    norm_timed!({
        let ranges = maybe_ranges(planes, plane);
        if ranges.len() <= 1 {
            forward_planes(&d, 0, &mut out, &mut means, &mut invstds, &gd, &sd, c, plane);
        } else {
            let mut out_chunks = split_by_ranges(&mut out, &ranges, plane);
            let mut mean_chunks = split_by_ranges(&mut means, &ranges, 1);
            let mut invstd_chunks = split_by_ranges(&mut invstds, &ranges, 1);
            std::thread::scope(|scope| {
                for (ri, range) in ranges.iter().enumerate() {
                    let out_c = std::mem::take(&mut out_chunks[ri]);
                    let mean_c = std::mem::take(&mut mean_chunks[ri]);
                    let invstd_c = std::mem::take(&mut invstd_chunks[ri]);
                    let (src_all, gd, sd): (&[E], &[E], &[E]) = (&d, &gd, &sd);
                    let first = range.start;
                    scope.spawn(move || {
                        let _guard = super::parallel::enter_worker_scope();
                        forward_planes(src_all, first, out_c, mean_c, invstd_c, gd, sd, c, plane);
                    });
                }
            });
        }
    });
    drop(d);
    drop(gd);
    drop(sd);
    Ok(Tensor::from_op(
        sh.to_vec(),
        out,
        Op::InstanceNorm(InstanceNormCtx {
            input: input.clone(),
            gain: gain.clone(),
            shift: shift.clone(),
            mean: means,
            invstd: invstds,
        }),
    ))
}

#[allow(clippy::too_many_arguments)]
fn backward_planes<E: Elem>(
    ctx: &InstanceNormCtx<E>,
    src_all: &[E],
    up: &[E],
    gd: &[E],
    first_plane: usize,
    count: usize,
    dinput: Option<&mut [E]>,
    plane_sg: Option<&mut [E]>,
    plane_ss: Option<&mut [E]>,
    c: usize,
    plane: usize,
) {
    let inv_m = E::ONE / E::from_f64(plane as f64);
    let mut dinput = dinput;
    let mut plane_sg = plane_sg;
    let mut plane_ss = plane_ss;
    for i in 0..count {
        let nc = first_plane + i;
        let src = &src_all[nc * plane..(nc + 1) * plane];
        let dy = &up[nc * plane..(nc + 1) * plane];
        let mu = ctx.mean[nc];
        let invstd = ctx.invstd[nc];
        let g = gd[nc % c];

        if plane_sg.is_some() || plane_ss.is_some() {
            let mut sg = E::ZERO;
            let mut ss = E::ZERO;
            for (&x, &dyi) in src.iter().zip(dy.iter()) {
                sg = sg + dyi * (x - mu) * invstd;
                ss = ss + dyi;
            }
            if let Some(buf) = plane_sg.as_deref_mut() {
                buf[i] = sg;
            }
            if let Some(buf) = plane_ss.as_deref_mut() {
                buf[i] = ss;
            }
        }
        if let Some(di) = dinput.as_deref_mut() {
            // dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            let mut sum_dxhat = E::ZERO;
            let mut sum_dxhat_xhat = E::ZERO;
            for (&x, &dyi) in src.iter().zip(dy.iter()) {
                let xhat = (x - mu) * invstd;
                let dxhat = dyi * g;
                sum_dxhat = sum_dxhat + dxhat;
                sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
            }
            let m1 = sum_dxhat * inv_m;
            let m2 = sum_dxhat_xhat * inv_m;
            let dst = &mut di[i * plane..(i + 1) * plane];
            for ((o, &x), &dyi) in dst.iter_mut().zip(src.iter()).zip(dy.iter()) {
                let xhat = (x - mu) * invstd;
                *o = invstd * (dyi * g - m1 - xhat * m2);
            }
        }
    }
}

pub(crate) fn instance_norm_backward<E: Elem>(ctx: &InstanceNormCtx<E>, up: &[E]) {
    let sh = ctx.input.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let plane = h * w;
    let planes = n * c;
    let d = ctx.input.data();
    let gd = ctx.gain.data();

    let need_input = ctx.input.tracked();
    let need_gain = ctx.gain.tracked();
    let need_shift = ctx.shift.tracked();
    let need_affine = need_gain || need_shift;

    let mut dinput = if need_input { vec![E::ZERO; d.len()] } else { Vec::new() };
    // Per-plane partial sums; reduced in plane order below so the result
    // does not depend on how planes were split across threads.
    let mut plane_sg = if need_affine { vec![E::ZERO; planes] } else { Vec::new() };
    let mut plane_ss = if need_affine { vec![E::ZERO; planes] } else { Vec::new() };

    norm_timed!({
        let ranges = maybe_ranges(planes, plane);
        if ranges.len() <= 1 {
            backward_planes(
                ctx,
                &d,
                up,
                &gd,
                0,
                planes,
                if need_input { Some(&mut dinput) } else { None },
                if need_affine { Some(&mut plane_sg) } else { None },
                if need_affine { Some(&mut plane_ss) } else { None },
                c,
                plane,
            );
        } else {
            let mut di_chunks = if need_input {
                split_by_ranges(&mut dinput, &ranges, plane)
            } else {
                Vec::new()
            };
            let mut sg_chunks = if need_affine {
                split_by_ranges(&mut plane_sg, &ranges, 1)
            } else {
                Vec::new()
            };
            let mut ss_chunks = if need_affine {
                split_by_ranges(&mut plane_ss, &ranges, 1)
            } else {
                Vec::new()
            };
            std::thread::scope(|scope| {
                for (ri, range) in ranges.iter().enumerate() {
                    let di = if need_input {
                        Some(std::mem::take(&mut di_chunks[ri]))
                    } else {
                        None
                    };
                    let sg = if need_affine {
                        Some(std::mem::take(&mut sg_chunks[ri]))
                    } else {
                        None
                    };
                    let ss = if need_affine {
                        Some(std::mem::take(&mut ss_chunks[ri]))
                    } else {
                        None
                    };
                    let (src_all, gd_ref): (&[E], &[E]) = (&d, &gd);
                    let (first, count) = (range.start, range.len());
                    scope.spawn(move || {
                        let _guard = super::parallel::enter_worker_scope();
                        backward_planes(
                            ctx, src_all, up, gd_ref, first, count, di, sg, ss, c, plane,
                        );
                    });
                }
            });
        }
    });
    drop(d);
    drop(gd);

    if need_shift {
        let mut dshift = vec![E::ZERO; c];
        for nc in 0..planes {
            dshift[nc % c] = dshift[nc % c] + plane_ss[nc];
        }
        ctx.shift.accumulate_grad(&dshift);
    }
    if need_gain {
        let mut dgain = vec![E::ZERO; c];
        for nc in 0..planes {
            dgain[nc % c] = dgain[nc % c] + plane_sg[nc];
        }
        ctx.gain.accumulate_grad(&dgain);
    }
    if need_input {
        ctx.input.accumulate_grad(&dinput);
    }
}

impl<E: Elem> Tensor<E> {
    pub fn instance_norm(&self, gain: &Tensor<E>, shift: &Tensor<E>) -> Result<Tensor<E>> {
        instance_norm(self, gain, shift)
    }
}
