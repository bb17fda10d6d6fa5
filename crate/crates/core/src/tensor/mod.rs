//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Values are stored row-major. Every operation that participates in a
//! gradient computation records a backward closure on its output node;
//! calling [`Tensor::backward`] on a scalar result replays those closures
//! in reverse creation order, which is a valid reverse topological order
//! because an output's id is always greater than its parents' ids.
//!
//! The element type is generic: training runs in `f32`, gradient checks
//! instantiate the same graph in `f64` to keep finite-difference noise
//! below tolerance.

mod adam;
mod checkpoint;
mod linalg;
mod loss;
mod ops;
mod reduce;

pub use adam::Adam;
pub use checkpoint::{load_tensors, save_tensors, Checkpoint};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt::{Debug, Display};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("shapes {a:?} and {b:?} are not broadcast-compatible")]
    BroadcastIncompatible { a: Vec<usize>, b: Vec<usize> },
    #[error("inner dimensions do not match: {a:?} x {b:?}")]
    InnerDimMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("channel mismatch: input has {input} channels, kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("index {index} out of range for axis {axis} of size {size}")]
    IndexOutOfRange { index: usize, axis: usize, size: usize },
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("optimizer state does not match parameter {index}: state len {state}, param len {param}")]
    StateMismatch { index: usize, state: usize, param: usize },
    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Scalar element type of a tensor. `f32` for training, `f64` for
/// gradient-check builds.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + 'static
{
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("float widens")
    }
}

impl Element for f32 {}
impl Element for f64 {}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn<E> = Box<dyn Fn(&[E])>;

struct Node<E: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<E>,
    grad: Option<Vec<E>>,
    requires_grad: bool,
    parents: Vec<Tensor<E>>,
    backward: Option<BackwardFn<E>>,
}

/// A dense n-dimensional value participating in the gradient tape.
pub struct Tensor<E: Element> {
    node: Rc<RefCell<Node<E>>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor { node: Rc::clone(&self.node) }
    }
}

impl<E: Element> Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.node.borrow();
        write!(f, "Tensor(shape={:?}, data={:?})", n.shape, n.data)
    }
}

impl<E: Element> Tensor<E> {
    fn new_node(
        shape: Vec<usize>,
        data: Vec<E>,
        requires_grad: bool,
        parents: Vec<Tensor<E>>,
        backward: Option<BackwardFn<E>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            node: Rc::new(RefCell::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad,
                parents,
                backward,
            })),
        }
    }

    /// Output of an operation: requires grad iff any parent does, and only
    /// then keeps the backward rule and parent links.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: impl Fn(&[E]) + 'static,
    ) -> Self {
        let requires = parents.iter().any(|p| p.requires_grad());
        if requires {
            Self::new_node(shape, data, true, parents, Some(Box::new(backward)))
        } else {
            Self::new_node(shape, data, false, Vec::new(), None)
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::InvalidShape { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Self::new_node(shape.to_vec(), data, false, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![E::zero(); n], false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], v: E) -> Self {
        let n = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![v; n], false, Vec::new(), None)
    }

    pub fn scalar(v: E) -> Self {
        Self::new_node(vec![1], vec![v], false, Vec::new(), None)
    }

    /// Mark this leaf as trainable.
    pub fn requires_grad_(self) -> Self {
        self.node.borrow_mut().requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.node.borrow().requires_grad
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.node.borrow().shape.len()
    }

    pub fn len(&self) -> usize {
        self.node.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Vec<E> {
        self.node.borrow().data.clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn value(&self) -> E {
        let n = self.node.borrow();
        debug_assert_eq!(n.data.len(), 1);
        n.data[0]
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.node.borrow().grad.clone()
    }

    /// Overwrite the stored values in place (optimizer updates). The shape
    /// must be unchanged.
    pub fn set_data(&self, data: Vec<E>) -> Result<(), TensorError> {
        let mut n = self.node.borrow_mut();
        if data.len() != n.data.len() {
            return Err(TensorError::InvalidShape { shape: n.shape.clone(), len: data.len() });
        }
        n.data = data;
        Ok(())
    }

    pub fn zero_grad(&self) {
        self.node.borrow_mut().grad = None;
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[E]) {
        let mut n = self.node.borrow_mut();
        let len = n.data.len();
        debug_assert_eq!(contrib.len(), len);
        let g = n.grad.get_or_insert_with(|| vec![E::zero(); len]);
        for (gi, ci) in g.iter_mut().zip(contrib) {
            *gi = *gi + *ci;
        }
    }

    fn id(&self) -> u64 {
        self.node.borrow().id
    }

    /// Reverse-mode sweep from a scalar output. Gradients of every
    /// reachable node are cleared first, so repeated calls on the same
    /// graph are idempotent.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.len() != 1 {
            return Err(TensorError::NotScalar(self.shape()));
        }
        let order = self.reachable();
        for t in &order {
            t.zero_grad();
        }
        self.accumulate_grad(&[E::one()]);
        for t in &order {
            let (bw, grad) = {
                let mut n = t.node.borrow_mut();
                (n.backward.take(), n.grad.clone())
            };
            if let Some(bw) = bw {
                if let Some(g) = &grad {
                    bw(g);
                }
                t.node.borrow_mut().backward = Some(bw);
            }
        }
        Ok(())
    }

    /// Grad-relevant nodes reachable from here, in reverse creation order.
    fn reachable(&self) -> Vec<Tensor<E>> {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut out = Vec::new();
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            for p in t.node.borrow().parents.iter() {
                if p.requires_grad() {
                    stack.push(p.clone());
                }
            }
            out.push(t);
        }
        out.sort_by(|a, b| b.id().cmp(&a.id()));
        out
    }

    /// Detached copy sharing no graph history.
    pub fn detach(&self) -> Self {
        let n = self.node.borrow();
        Self::new_node(n.shape.clone(), n.data.clone(), false, Vec::new(), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_roundtrip() {
        let t = Tensor::<f32>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.shape(), vec![2, 2]);
        assert_eq!(t.data(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(!t.requires_grad());
    }

    #[test]
    fn shape_data_mismatch_rejected() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let t = Tensor::<f64>::zeros(&[2]).requires_grad_();
        assert!(matches!(t.backward(), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn backward_idempotent() {
        let x = Tensor::<f64>::from_vec(&[2], vec![2.0, 3.0]).unwrap().requires_grad_();
        let y = x.mul(&x).unwrap().sum_all();
        y.backward().unwrap();
        let g1 = x.grad().unwrap();
        y.backward().unwrap();
        let g2 = x.grad().unwrap();
        assert_eq!(g1, g2);
        assert_eq!(g1, vec![4.0, 6.0]);
    }
}
