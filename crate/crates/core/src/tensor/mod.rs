//! Reverse-mode automatic-differentiation tensor engine.
//!
//! Tensors are dense row-major buffers with an optional operation record;
//! the records form an ownership-linked DAG that [`Tensor::backward`] walks
//! in reverse topological order. The engine is deliberately small: it only
//! carries the convolutional and elementwise operations the networks need.

mod adam;
mod autograd;
mod conv;
mod elem;
mod gradcheck;
mod io;
mod norm;
mod ops;
mod parallel;
pub mod timing;
mod params;

pub use adam::{adam_step, Adam, OptimizerConfig};
pub use autograd::Op;
pub use conv::conv2d;
pub use elem::{gemm_rowmajor, Elem};
pub use gradcheck::{check_against_reference, grad_check, GradCheckOptions, GradCheckOutcome};
pub use io::{
    read_t2np, read_t2np_file, write_t2np, write_t2np_file, T2npEntry, T2NP_MAGIC, T2NP_VERSION,
};
pub use norm::{instance_norm, INSTANCE_NORM_EPS};
pub use ops::{l1_loss, smoothness_loss, LOG_EPS};
pub use parallel::worker_threads;
pub use params::ParamSet;

use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard};

/// Errors produced by tensor construction and operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Two operands disagree in shape where identical shapes are required.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A dimension is invalid for the requested operation; the message names
    /// the offending dimension.
    BadDimension { op: &'static str, message: String },
    /// Data buffer length does not match the product of the shape.
    DataLength { expected: usize, got: usize },
    /// An operation that requires a scalar received a larger tensor.
    NotScalar { op: &'static str, shape: Vec<usize> },
    /// Strict-mode log of a non-positive entry.
    NonPositiveLog { index: usize, value: f64 },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            TensorError::BadDimension { op, message } => write!(f, "{op}: {message}"),
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape (expected {expected})")
            }
            TensorError::NotScalar { op, shape } => {
                write!(f, "{op}: expected scalar, got shape {shape:?}")
            }
            TensorError::NonPositiveLog { index, value } => {
                write!(f, "log: non-positive entry {value} at index {index}")
            }
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T> = std::result::Result<T, TensorError>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// RAII guard that disables tape recording on the current thread.
pub struct NoGradGuard {
    prev: bool,
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

/// Disable recording until the returned guard is dropped. Forward passes run
/// under this guard build no graph and retain no intermediates.
pub fn no_grad() -> NoGradGuard {
    GRAD_ENABLED.with(|g| {
        let prev = g.get();
        g.set(false);
        NoGradGuard { prev }
    })
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct Inner<E: Elem> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<E>>,
    grad: RwLock<Option<Vec<E>>>,
    /// Leaf tensor that accumulates gradients (network parameters).
    requires_grad: bool,
    /// Participates in the autograd graph (leaf param or derived from one).
    track: bool,
    op: Option<Op<E>>,
}

/// Dense n-dimensional array handle. Cloning is cheap (shared storage).
pub struct Tensor<E: Elem = f32> {
    inner: Arc<Inner<E>>,
}

impl<E: Elem> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<E: Elem> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl<E: Elem> Tensor<E> {
    fn make(shape: Vec<usize>, data: Vec<E>, requires_grad: bool, op: Option<Op<E>>) -> Self {
        parallel::init_allocator();
        let track = requires_grad || op.is_some();
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: RwLock::new(None),
                requires_grad,
                track,
                op,
            }),
        }
    }

    /// New leaf tensor. Fails if `data.len() != product(shape)`.
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self::make(shape.to_vec(), data, false, None))
    }

    /// New leaf parameter that accumulates gradients.
    pub fn param(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self::make(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![E::ZERO; n], false, None)
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let n: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![value; n], false, None)
    }

    pub fn scalar(value: E) -> Self {
        Self::make(vec![1], vec![value], false, None)
    }

    /// Internal constructor for op outputs. Debug builds verify the output
    /// holds no NaN/Inf so a bad kernel is caught at its source.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<E>, op: Op<E>) -> Self {
        #[cfg(debug_assertions)]
        {
            for (i, v) in data.iter().enumerate() {
                debug_assert!(
                    v.is_finite(),
                    "non-finite value {v} at index {i} out of {:?}",
                    op_name(&op)
                );
            }
        }
        if grad_enabled() && op_tracks(&op) {
            Self::make(shape, data, false, Some(op))
        } else {
            Self::make(shape, data, false, None)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn tracked(&self) -> bool {
        self.inner.track
    }

    pub(crate) fn op(&self) -> Option<&Op<E>> {
        self.inner.op.as_ref()
    }

    /// Read access to the underlying buffer.
    pub fn data(&self) -> RwLockReadGuard<'_, Vec<E>> {
        self.inner.data.read().unwrap()
    }

    /// Copy of the underlying buffer.
    pub fn to_vec(&self) -> Vec<E> {
        self.inner.data.read().unwrap().clone()
    }

    /// Overwrite the buffer in place, preserving tensor identity.
    pub fn set_data(&self, values: &[E]) -> Result<()> {
        let mut d = self.inner.data.write().unwrap();
        if values.len() != d.len() {
            return Err(TensorError::DataLength {
                expected: d.len(),
                got: values.len(),
            });
        }
        d.copy_from_slice(values);
        Ok(())
    }

    /// Mutate the buffer through a closure (used by the optimizer).
    pub fn with_data_mut<R>(&self, f: impl FnOnce(&mut [E]) -> R) -> R {
        let mut d = self.inner.data.write().unwrap();
        f(&mut d)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<E> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar {
                op: "item",
                shape: self.inner.shape.clone(),
            });
        }
        Ok(self.inner.data.read().unwrap()[0])
    }

    /// Current gradient, if any backward pass has reached this tensor.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.read().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.write().unwrap() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[E]) {
        let mut slot = self.inner.grad.write().unwrap();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi = *gi + *di;
                }
            }
            None => {
                *slot = Some(delta.to_vec());
            }
        }
    }

    /// Read guard over the gradient slot (borrow without cloning).
    pub(crate) fn grad_guard(&self) -> RwLockReadGuard<'_, Option<Vec<E>>> {
        self.inner.grad.read().unwrap()
    }

    /// Accumulate `f(a_i)` into the gradient without a temporary buffer.
    pub(crate) fn accumulate_grad_zip1(&self, a: &[E], f: impl Fn(E) -> E) {
        let mut slot = self.inner.grad.write().unwrap();
        match slot.as_mut() {
            Some(g) => {
                for (gi, &ai) in g.iter_mut().zip(a) {
                    *gi = *gi + f(ai);
                }
            }
            None => {
                *slot = Some(a.iter().map(|&ai| f(ai)).collect());
            }
        }
    }

    /// Accumulate the same value into every gradient entry.
    pub(crate) fn accumulate_grad_broadcast(&self, v: E) {
        let n = self.numel();
        let mut slot = self.inner.grad.write().unwrap();
        match slot.as_mut() {
            Some(g) => {
                for gi in g.iter_mut() {
                    *gi = *gi + v;
                }
            }
            None => {
                *slot = Some(vec![v; n]);
            }
        }
    }

    /// Accumulate `f(a_i, b_i)` into the gradient without a temporary buffer.
    pub(crate) fn accumulate_grad_zip2(&self, a: &[E], b: &[E], f: impl Fn(E, E) -> E) {
        let mut slot = self.inner.grad.write().unwrap();
        match slot.as_mut() {
            Some(g) => {
                for ((gi, &ai), &bi) in g.iter_mut().zip(a).zip(b) {
                    *gi = *gi + f(ai, bi);
                }
            }
            None => {
                *slot = Some(a.iter().zip(b).map(|(&ai, &bi)| f(ai, bi)).collect());
            }
        }
    }

    /// Leaf copy of this tensor's values, cut off from the graph.
    pub fn detach(&self) -> Tensor<E> {
        Self::make(self.inner.shape.clone(), self.to_vec(), false, None)
    }

    /// Convert between element precisions (used by the f64 check mode).
    pub fn cast<T: Elem>(&self) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|v| T::from_f64(v.to_f64()))
            .collect();
        Tensor::<T>::make(self.inner.shape.clone(), data, self.inner.requires_grad, None)
    }
}

fn op_tracks<E: Elem>(op: &Op<E>) -> bool {
    autograd::op_inputs(op).iter().any(|t| t.tracked())
}

#[cfg(debug_assertions)]
fn op_name<E: Elem>(op: &Op<E>) -> &'static str {
    autograd::op_kind_name(op)
}
