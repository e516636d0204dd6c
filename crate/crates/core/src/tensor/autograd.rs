//! Operation records and the reverse pass.
//!
//! Each non-leaf tensor stores the operation that produced it together with
//! handles to its inputs, so the graph is held alive by ownership alone.
//! `backward` collects the reachable nodes in post-order and replays them
//! reversed, summing contributions when a tensor feeds several consumers.

use super::conv::Conv2dCtx;
use super::norm::InstanceNormCtx;
use super::{Elem, Result, Tensor, TensorError};
use std::collections::HashSet;

pub enum Op<E: Elem> {
    Add(Tensor<E>, Tensor<E>),
    Sub(Tensor<E>, Tensor<E>),
    Mul(Tensor<E>, Tensor<E>),
    AddScalar(Tensor<E>, E),
    MulScalar(Tensor<E>, E),
    Relu(Tensor<E>),
    LeakyRelu(Tensor<E>, E),
    Tanh(Tensor<E>),
    Sigmoid(Tensor<E>),
    Abs(Tensor<E>),
    Exp(Tensor<E>),
    /// `clamp_floor` is the eval-mode input floor (None in strict mode).
    Log(Tensor<E>, Option<E>),
    Sum(Tensor<E>),
    Mean(Tensor<E>),
    L1Loss(Tensor<E>, Tensor<E>),
    /// Depth-gradient penalty; edge weights precomputed from the image.
    Smoothness {
        pred: Tensor<E>,
        weight_x: Vec<E>,
        weight_y: Vec<E>,
    },
    Conv2d(Conv2dCtx<E>),
    Upsample2x(Tensor<E>),
    AvgPool2d(Tensor<E>, usize),
    InstanceNorm(InstanceNormCtx<E>),
}

pub(crate) fn op_inputs<E: Elem>(op: &Op<E>) -> Vec<&Tensor<E>> {
    match op {
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::L1Loss(a, b) => vec![a, b],
        Op::AddScalar(a, _)
        | Op::MulScalar(a, _)
        | Op::Relu(a)
        | Op::LeakyRelu(a, _)
        | Op::Tanh(a)
        | Op::Sigmoid(a)
        | Op::Abs(a)
        | Op::Exp(a)
        | Op::Log(a, _)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::Upsample2x(a)
        | Op::AvgPool2d(a, _) => vec![a],
        Op::Smoothness { pred, .. } => vec![pred],
        Op::Conv2d(ctx) => vec![&ctx.input, &ctx.kernel, &ctx.bias],
        Op::InstanceNorm(ctx) => vec![&ctx.input, &ctx.gain, &ctx.shift],
    }
}

pub(crate) fn op_kind_name<E: Elem>(op: &Op<E>) -> &'static str {
    match op {
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddScalar(..) => "add_scalar",
        Op::MulScalar(..) => "mul_scalar",
        Op::Relu(..) => "relu",
        Op::LeakyRelu(..) => "leaky_relu",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Abs(..) => "abs",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::L1Loss(..) => "l1_loss",
        Op::Smoothness { .. } => "smoothness",
        Op::Conv2d(..) => "conv2d",
        Op::Upsample2x(..) => "upsample2x",
        Op::AvgPool2d(..) => "avg_pool2d",
        Op::InstanceNorm(..) => "instance_norm",
    }
}

impl<E: Elem> Tensor<E> {
    /// Reverse pass from a scalar loss. Every reachable tracked tensor ends
    /// up with `d loss / d tensor` accumulated into its grad buffer; calling
    /// again without zeroing adds the new gradients on top.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: self.shape().to_vec(),
            });
        }
        // Post-order DFS with an explicit stack; the graph can be deep.
        let mut order: Vec<Tensor<E>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<E>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(op) = node.op() {
                for input in op_inputs(op) {
                    if input.tracked() && !visited.contains(&input.id()) {
                        stack.push(((*input).clone(), false));
                    }
                }
            }
        }

        self.accumulate_grad(&[E::ONE]);
        for node in order.iter().rev() {
            let Some(op) = node.op() else { continue };
            let guard = node.grad_guard();
            let Some(upstream) = guard.as_deref() else {
                continue; // no path from the loss to this node
            };
            backprop(node, op, upstream);
        }
        Ok(())
    }
}

fn backprop<E: Elem>(node: &Tensor<E>, op: &Op<E>, up: &[E]) {
    match op {
        Op::Add(a, b) => {
            if a.tracked() {
                a.accumulate_grad(up);
            }
            if b.tracked() {
                b.accumulate_grad(up);
            }
        }
        Op::Sub(a, b) => {
            if a.tracked() {
                a.accumulate_grad(up);
            }
            if b.tracked() {
                b.accumulate_grad_zip1(up, |g| E::ZERO - g);
            }
        }
        Op::Mul(a, b) => {
            if a.tracked() {
                let bd = b.data();
                a.accumulate_grad_zip2(up, &bd, |g, bv| g * bv);
            }
            if b.tracked() {
                let ad = a.data();
                b.accumulate_grad_zip2(up, &ad, |g, av| g * av);
            }
        }
        Op::AddScalar(a, _) => {
            if a.tracked() {
                a.accumulate_grad(up);
            }
        }
        Op::MulScalar(a, c) => {
            if a.tracked() {
                let c = *c;
                a.accumulate_grad_zip1(up, |g| g * c);
            }
        }
        Op::Relu(a) => {
            if a.tracked() {
                let ad = a.data();
                a.accumulate_grad_zip2(up, &ad, |g, x| if x > E::ZERO { g } else { E::ZERO });
            }
        }
        Op::LeakyRelu(a, slope) => {
            if a.tracked() {
                let slope = *slope;
                let ad = a.data();
                a.accumulate_grad_zip2(up, &ad, |g, x| if x > E::ZERO { g } else { g * slope });
            }
        }
        Op::Tanh(a) => {
            if a.tracked() {
                let yd = node.data();
                a.accumulate_grad_zip2(up, &yd, |g, y| g * (E::ONE - y * y));
            }
        }
        Op::Sigmoid(a) => {
            if a.tracked() {
                let yd = node.data();
                a.accumulate_grad_zip2(up, &yd, |g, y| g * y * (E::ONE - y));
            }
        }
        Op::Abs(a) => {
            if a.tracked() {
                let ad = a.data();
                a.accumulate_grad_zip2(up, &ad, |g, x| {
                    if x > E::ZERO {
                        g
                    } else if x < E::ZERO {
                        E::ZERO - g
                    } else {
                        E::ZERO // subgradient 0 at the tie
                    }
                });
            }
        }
        Op::Exp(a) => {
            if a.tracked() {
                let yd = node.data();
                a.accumulate_grad_zip2(up, &yd, |g, y| g * y);
            }
        }
        Op::Log(a, clamp_floor) => {
            if a.tracked() {
                let floor = *clamp_floor;
                let ad = a.data();
                a.accumulate_grad_zip2(up, &ad, |g, x| {
                    let x = match floor {
                        Some(fl) => x.max(fl),
                        None => x,
                    };
                    g * (E::ONE / x)
                });
            }
        }
        Op::Sum(a) => {
            if a.tracked() {
                a.accumulate_grad_broadcast(up[0]);
            }
        }
        Op::Mean(a) => {
            if a.tracked() {
                let scale = E::ONE / E::from_f64(a.numel() as f64);
                a.accumulate_grad_broadcast(up[0] * scale);
            }
        }
        Op::L1Loss(a, b) => {
            let g = up[0] / E::from_f64(a.numel() as f64);
            let signed = |x: E, y: E| {
                if x > y {
                    g
                } else if x < y {
                    E::ZERO - g
                } else {
                    E::ZERO
                }
            };
            if a.tracked() {
                let ad = a.data();
                let bd = b.data();
                a.accumulate_grad_zip2(&ad, &bd, signed);
            }
            if b.tracked() {
                let ad = a.data();
                let bd = b.data();
                b.accumulate_grad_zip2(&ad, &bd, |x, y| E::ZERO - signed(x, y));
            }
        }
        Op::Smoothness {
            pred,
            weight_x,
            weight_y,
        } => {
            if pred.tracked() {
                super::ops::smoothness_backward(node, pred, weight_x, weight_y, up[0]);
            }
        }
        Op::Conv2d(ctx) => super::conv::conv2d_backward(ctx, up),
        Op::Upsample2x(a) => {
            if a.tracked() {
                super::conv::upsample2x_backward(a, up);
            }
        }
        Op::AvgPool2d(a, factor) => {
            if a.tracked() {
                super::conv::avg_pool2d_backward(a, *factor, up);
            }
        }
        Op::InstanceNorm(ctx) => super::norm::instance_norm_backward(ctx, up),
    }
}
