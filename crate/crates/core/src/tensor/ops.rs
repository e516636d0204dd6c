//! Elementwise, reduction and fused loss operations with their backward
//! rules. Binary ops require identical shapes; the only broadcasting in the
//! engine is against scalars via the `_scalar` variants.

use super::{Elem, Op, Result, Tensor, TensorError};

/// Eval-mode floor for `log` of non-positive entries.
pub const LOG_EPS: f64 = 1e-6;

fn check_same_shape<E: Elem>(op: &'static str, a: &Tensor<E>, b: &Tensor<E>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<E: Elem> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        check_same_shape("add", self, other)?;
        let a = self.data();
        let b = other.data();
        let out: Vec<E> = a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect();
        drop(a);
        drop(b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            Op::Add(self.clone(), other.clone()),
        ))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        check_same_shape("sub", self, other)?;
        let a = self.data();
        let b = other.data();
        let out: Vec<E> = a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect();
        drop(a);
        drop(b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            Op::Sub(self.clone(), other.clone()),
        ))
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        check_same_shape("mul", self, other)?;
        let a = self.data();
        let b = other.data();
        let out: Vec<E> = a.iter().zip(b.iter()).map(|(&x, &y)| x * y).collect();
        drop(a);
        drop(b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    pub fn square(&self) -> Tensor<E> {
        self.mul(self).expect("square: same tensor")
    }

    pub fn add_scalar(&self, c: E) -> Tensor<E> {
        let out: Vec<E> = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::AddScalar(self.clone(), c))
    }

    pub fn mul_scalar(&self, c: E) -> Tensor<E> {
        let out: Vec<E> = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::MulScalar(self.clone(), c))
    }

    pub fn relu(&self) -> Tensor<E> {
        let out: Vec<E> = self
            .data()
            .iter()
            .map(|&x| if x > E::ZERO { x } else { E::ZERO })
            .collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::Relu(self.clone()))
    }

    pub fn leaky_relu(&self, slope: E) -> Tensor<E> {
        let out: Vec<E> = self
            .data()
            .iter()
            .map(|&x| if x > E::ZERO { x } else { x * slope })
            .collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::LeakyRelu(self.clone(), slope))
    }

    pub fn tanh(&self) -> Tensor<E> {
        let out: Vec<E> = self.data().iter().map(|&x| x.tanh()).collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Tensor<E> {
        let one = E::ONE;
        let out: Vec<E> = self
            .data()
            .iter()
            .map(|&x| one / (one + (E::ZERO - x).exp()))
            .collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::Sigmoid(self.clone()))
    }

    pub fn abs(&self) -> Tensor<E> {
        let out: Vec<E> = self.data().iter().map(|&x| x.abs()).collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::Abs(self.clone()))
    }

    pub fn exp(&self) -> Tensor<E> {
        let out: Vec<E> = self.data().iter().map(|&x| x.exp()).collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::Exp(self.clone()))
    }

    /// Strict-mode natural log: rejects non-positive entries.
    pub fn log(&self) -> Result<Tensor<E>> {
        {
            let d = self.data();
            if let Some((i, &v)) = d.iter().enumerate().find(|(_, &v)| v <= E::ZERO) {
                return Err(TensorError::NonPositiveLog {
                    index: i,
                    value: v.to_f64(),
                });
            }
        }
        let out: Vec<E> = self.data().iter().map(|&x| x.ln()).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            Op::Log(self.clone(), None),
        ))
    }

    /// Eval-mode natural log: non-positive entries are clamped to `LOG_EPS`.
    pub fn log_eval(&self) -> Tensor<E> {
        let floor = E::from_f64(LOG_EPS);
        let out: Vec<E> = self.data().iter().map(|&x| x.max(floor).ln()).collect();
        Tensor::from_op(self.shape().to_vec(), out, Op::Log(self.clone(), Some(floor)))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&self) -> Tensor<E> {
        let s = self.data().iter().fold(E::ZERO, |acc, &x| acc + x);
        Tensor::from_op(vec![1], vec![s], Op::Sum(self.clone()))
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&self) -> Tensor<E> {
        let s = self.data().iter().fold(E::ZERO, |acc, &x| acc + x);
        let m = s / E::from_f64(self.numel() as f64);
        Tensor::from_op(vec![1], vec![m], Op::Mean(self.clone()))
    }
}

/// Mean absolute difference. Subgradient at exact ties is 0.
pub fn l1_loss<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    check_same_shape("l1_loss", a, b)?;
    let ad = a.data();
    let bd = b.data();
    let s = ad
        .iter()
        .zip(bd.iter())
        .fold(E::ZERO, |acc, (&x, &y)| acc + (x - y).abs());
    let m = s / E::from_f64(a.numel() as f64);
    drop(ad);
    drop(bd);
    Ok(Tensor::from_op(
        vec![1],
        vec![m],
        Op::L1Loss(a.clone(), b.clone()),
    ))
}

/// Edge-aware depth-gradient penalty.
///
/// Forward differences along x and y; each depth gradient is weighted by
/// `exp(-|image gradient|)` with the image gradient averaged over channels.
/// The two directional terms are averaged over their valid pixels and
/// summed. Gradients flow into `pred` only; the image acts as a fixed
/// edge-weight map.
pub fn smoothness_loss<E: Elem>(pred: &Tensor<E>, image: &Tensor<E>) -> Result<Tensor<E>> {
    let ps = pred.shape();
    let is = image.shape();
    if ps.len() != 4 || is.len() != 4 || ps[1] != 1 {
        return Err(TensorError::BadDimension {
            op: "smoothness_loss",
            message: format!("expected pred [N,1,H,W] and image [N,C,H,W], got {ps:?} and {is:?}"),
        });
    }
    if ps[0] != is[0] || ps[2] != is[2] || ps[3] != is[3] {
        return Err(TensorError::ShapeMismatch {
            op: "smoothness_loss",
            lhs: ps.to_vec(),
            rhs: is.to_vec(),
        });
    }
    let (n, c, h, w) = (is[0], is[1], is[2], is[3]);
    let img = image.data();
    let dep = pred.data();
    let inv_c = E::ONE / E::from_f64(c as f64);

    // exp(-|channel-mean forward difference|) per valid position
    let mut weight_x = vec![E::ZERO; n * h * (w.saturating_sub(1))];
    let mut weight_y = vec![E::ZERO; n * (h.saturating_sub(1)) * w];
    for ni in 0..n {
        for i in 0..h {
            for j in 0..w.saturating_sub(1) {
                let mut acc = E::ZERO;
                for ci in 0..c {
                    let base = ((ni * c + ci) * h + i) * w + j;
                    acc = acc + (img[base + 1] - img[base]).abs();
                }
                weight_x[(ni * h + i) * (w - 1) + j] = (E::ZERO - acc * inv_c).exp();
            }
        }
        for i in 0..h.saturating_sub(1) {
            for j in 0..w {
                let mut acc = E::ZERO;
                for ci in 0..c {
                    let base = ((ni * c + ci) * h + i) * w + j;
                    acc = acc + (img[base + w] - img[base]).abs();
                }
                weight_y[(ni * (h - 1) + i) * w + j] = (E::ZERO - acc * inv_c).exp();
            }
        }
    }

    let mut sum_x = E::ZERO;
    let mut sum_y = E::ZERO;
    for ni in 0..n {
        for i in 0..h {
            for j in 0..w.saturating_sub(1) {
                let base = (ni * h + i) * w + j;
                let diff = (dep[base + 1] - dep[base]).abs();
                sum_x = sum_x + diff * weight_x[(ni * h + i) * (w - 1) + j];
            }
        }
        for i in 0..h.saturating_sub(1) {
            for j in 0..w {
                let base = (ni * h + i) * w + j;
                let diff = (dep[base + w] - dep[base]).abs();
                sum_y = sum_y + diff * weight_y[(ni * (h - 1) + i) * w + j];
            }
        }
    }
    drop(img);
    drop(dep);

    let count_x = n * h * w.saturating_sub(1);
    let count_y = n * h.saturating_sub(1) * w;
    let mut loss = E::ZERO;
    if count_x > 0 {
        loss = loss + sum_x / E::from_f64(count_x as f64);
    }
    if count_y > 0 {
        loss = loss + sum_y / E::from_f64(count_y as f64);
    }
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        Op::Smoothness {
            pred: pred.clone(),
            weight_x,
            weight_y,
        },
    ))
}

pub(crate) fn smoothness_backward<E: Elem>(
    _node: &Tensor<E>,
    pred: &Tensor<E>,
    weight_x: &[E],
    weight_y: &[E],
    up: E,
) {
    let ps = pred.shape();
    let (n, h, w) = (ps[0], ps[2], ps[3]);
    let dep = pred.data();
    let mut grad = vec![E::ZERO; dep.len()];
    let count_x = n * h * w.saturating_sub(1);
    let count_y = n * h.saturating_sub(1) * w;
    if count_x > 0 {
        let gx = up / E::from_f64(count_x as f64);
        for ni in 0..n {
            for i in 0..h {
                for j in 0..w - 1 {
                    let base = (ni * h + i) * w + j;
                    let diff = dep[base + 1] - dep[base];
                    if diff == E::ZERO {
                        continue;
                    }
                    let s = if diff > E::ZERO { E::ONE } else { E::ZERO - E::ONE };
                    let contrib = s * weight_x[(ni * h + i) * (w - 1) + j] * gx;
                    grad[base + 1] = grad[base + 1] + contrib;
                    grad[base] = grad[base] - contrib;
                }
            }
        }
    }
    if count_y > 0 {
        let gy = up / E::from_f64(count_y as f64);
        for ni in 0..n {
            for i in 0..h - 1 {
                for j in 0..w {
                    let base = (ni * h + i) * w + j;
                    let diff = dep[base + w] - dep[base];
                    if diff == E::ZERO {
                        continue;
                    }
                    let s = if diff > E::ZERO { E::ONE } else { E::ZERO - E::ONE };
                    let contrib = s * weight_y[(ni * (h - 1) + i) * w + j] * gy;
                    grad[base + w] = grad[base + w] + contrib;
                    grad[base] = grad[base] - contrib;
                }
            }
        }
    }
    drop(dep);
    pred.accumulate_grad(&grad);
}
