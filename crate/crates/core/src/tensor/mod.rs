//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! The element type parameter carries the dtype: training code instantiates
//! `Tensor<f32>`, gradient checks and equivalence suites use `Tensor<f64>`.
//! Each op that produces a tensor requiring gradients records its parents
//! and a backward rule; `backward()` on a scalar traverses the recorded
//! graph in exact reverse topological order and populates `grad` on every
//! reachable tensor that requires gradients. Backward rules are consumed
//! as they run, so a second `backward()` without rebuilding the graph is
//! an error.
//!
//! Broadcasting is limited to the trailing-axis affine patterns the model
//! stack uses: `[..,D] (+|*) [D]`. A graph and its tensors are confined to
//! one logical execution context (the handles are not `Send`); parallelism
//! lives inside the slice kernels, split over independent output rows so
//! results are bit-identical for any thread count.

pub mod gradcheck;
mod kernels;
mod ops;

use crate::element::Element;
use crate::error::{Error, Result};
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn<T> = Box<dyn FnOnce(&[T])>;

pub(crate) struct OpRecord<T: Element> {
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
}

struct Inner<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Option<OpRecord<T>>,
    consumed: bool,
}

/// Shared handle to a tensor node. Clones are cheap and alias the same
/// storage, like framework tensors.
pub struct Tensor<T: Element> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Element> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(
            f,
            "Tensor{{id={}, shape={:?}, requires_grad={}}}",
            inner.id, inner.shape, inner.requires_grad
        )
    }
}

fn check_shape(data_len: usize, shape: &[usize]) -> Result<()> {
    let numel: usize = shape.iter().product();
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidDim(format!("zero extent in shape {shape:?}")));
    }
    if numel != data_len {
        return Err(Error::InvalidDim(format!(
            "shape {shape:?} implies {numel} elements, data has {data_len}"
        )));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    fn new(data: Vec<T>, shape: Vec<usize>, requires_grad: bool, op: Option<OpRecord<T>>) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad,
                op,
                consumed: false,
            })),
        }
    }

    /// Leaf tensor that does not require gradients (inputs, targets).
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        check_shape(data.len(), shape)?;
        Ok(Self::new(data, shape.to_vec(), false, None))
    }

    /// Leaf parameter: requires gradients.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        check_shape(data.len(), shape)?;
        Ok(Self::new(data, shape.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new(vec![T::zero(); numel], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self::new(vec![value; numel], shape.to_vec(), false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::new(vec![value], vec![1], false, None)
    }

    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Self::new(data, shape, true, Some(OpRecord { parents, backward }))
        } else {
            Self::new(data, shape, false, None)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Flip gradient tracking on a leaf (freezing/unfreezing parameters).
    pub fn set_requires_grad(&self, requires: bool) {
        self.inner.borrow_mut().requires_grad = requires;
    }

    /// Copy of the tensor's data.
    pub fn to_vec(&self) -> Vec<T> {
        self.inner.borrow().data.clone()
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> T {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() on non-scalar tensor");
        inner.data[0]
    }

    /// Run `f` over a borrow of the raw data.
    pub fn with_data<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.inner.borrow().data)
    }

    /// Replace the data in place (optimizer updates, gradcheck nudges).
    /// Shape must be preserved.
    pub fn set_data(&self, data: Vec<T>) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(
            data.len(),
            inner.data.len(),
            "set_data length mismatch: {} vs {}",
            data.len(),
            inner.data.len()
        );
        inner.data = data;
    }

    /// Mutate data in place through a closure.
    pub fn update_data(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.inner.borrow_mut().data);
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Detached copy: fresh leaf with the same data, no graph history.
    pub fn detach(&self) -> Tensor<T> {
        let inner = self.inner.borrow();
        Self::new(inner.data.clone(), inner.shape.clone(), false, None)
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(delta.len(), inner.data.len());
        match &mut inner.grad {
            Some(g) => {
                for (gi, &di) in g.iter_mut().zip(delta) {
                    *gi = *gi + di;
                }
            }
            None => inner.grad = Some(delta.to_vec()),
        }
    }

    /// Reverse-mode gradient of this scalar with respect to every reachable
    /// tensor that requires gradients. Consumes the recorded graph.
    pub fn backward(&self) -> Result<()> {
        {
            let inner = self.inner.borrow();
            if inner.consumed {
                return Err(Error::GraphConsumed);
            }
            if inner.data.len() != 1 {
                return Err(Error::NonScalarBackward(inner.shape.clone()));
            }
        }
        let graph = Graph::trace(self);
        self.inner.borrow_mut().consumed = true;
        self.accumulate_grad(&[T::one()]);
        for node in graph.order.iter().rev() {
            let (op, grad) = {
                let mut inner = node.inner.borrow_mut();
                let op = inner.op.take();
                if op.is_some() {
                    inner.consumed = true;
                }
                let grad = inner.grad.clone();
                (op, grad)
            };
            if let Some(op) = op {
                let grad = grad.expect("node in backward order must have received a gradient");
                (op.backward)(&grad);
            }
        }
        Ok(())
    }
}

/// Topologically ordered record of the operations reachable from a root:
/// parents always precede children. Built once per backward pass.
pub struct Graph<T: Element> {
    order: Vec<Tensor<T>>,
}

impl<T: Element> Graph<T> {
    /// Iterative post-order DFS from `root` over recorded parents.
    pub fn trace(root: &Tensor<T>) -> Self {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // stack of (node, child_cursor)
        let mut stack: Vec<(Tensor<T>, usize)> = Vec::new();
        if visited.insert(root.id()) {
            stack.push((root.clone(), 0));
        }
        while let Some((node, cursor)) = stack.pop() {
            let next_parent = {
                let inner = node.inner.borrow();
                inner
                    .op
                    .as_ref()
                    .and_then(|op| op.parents.get(cursor).cloned())
            };
            match next_parent {
                Some(parent) => {
                    stack.push((node, cursor + 1));
                    if visited.insert(parent.id()) {
                        stack.push((parent, 0));
                    }
                }
                None => order.push(node),
            }
        }
        Graph { order }
    }

    /// Number of nodes in the traced graph.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_shape() {
        assert!(Tensor::from_vec(vec![1.0f64, 2.0], &[3]).is_err());
        assert!(Tensor::from_vec(vec![1.0f64, 2.0], &[2]).is_ok());
        assert!(Tensor::<f64>::from_vec(vec![], &[0]).is_err());
    }

    #[test]
    fn grad_matches_shape_after_backward() {
        let a = Tensor::param(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let loss = a.mean().unwrap();
        loss.backward().unwrap();
        let g = a.grad().unwrap();
        assert_eq!(g.len(), a.numel());
        for gi in g {
            assert!((gi - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn second_backward_is_error() {
        let a = Tensor::param(vec![1.0f64, 2.0], &[2]).unwrap();
        let loss = a.mean().unwrap();
        loss.backward().unwrap();
        match loss.backward() {
            Err(Error::GraphConsumed) => {}
            other => panic!("expected GraphConsumed, got {other:?}"),
        }
    }

    #[test]
    fn backward_on_non_scalar_is_error() {
        let a = Tensor::param(vec![1.0f64, 2.0], &[2]).unwrap();
        let b = a.scale(2.0).unwrap();
        assert!(matches!(b.backward(), Err(Error::NonScalarBackward(_))));
    }

    #[test]
    fn no_grad_tracking_without_requires_grad() {
        let a = Tensor::from_vec(vec![1.0f64, 2.0], &[2]).unwrap();
        let b = a.scale(3.0).unwrap();
        assert!(!b.requires_grad());
        let g = Graph::trace(&b);
        assert_eq!(g.len(), 1); // only the root, no recorded op
    }

    #[test]
    fn gradient_accumulates_across_consumers() {
        // loss = mean(2a) + mean(3a) -> dL/da_i = (2 + 3)/n
        let a = Tensor::param(vec![1.0f64, 2.0], &[2]).unwrap();
        let x = a.scale(2.0).unwrap().mean().unwrap();
        let y = a.scale(3.0).unwrap().mean().unwrap();
        let loss = x.add(&y).unwrap();
        loss.backward().unwrap();
        let g = a.grad().unwrap();
        for gi in g {
            assert!((gi - 2.5).abs() < 1e-12);
        }
    }
}
