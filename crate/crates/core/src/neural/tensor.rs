//! N-dimensional tensors on a reverse-mode differentiation tape.
//!
//! A `Tensor` is a cheap handle (`Rc`) to a value buffer plus optional tape
//! bookkeeping. Ops record a backward closure only when some input is
//! trainable, so inference builds no graph. One model instance is
//! single-threaded; parallelism lives at the run level.

use super::NeuralError;
use std::cell::{Ref, RefCell};
use std::rc::Rc;

pub(crate) type BackwardFn = Box<dyn Fn(&Tensor)>;

pub struct Inner {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Vec<f64>>,
    requires_grad: bool,
    name: Option<String>,
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
}

#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("name", &self.inner.name)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn build(
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        name: Option<String>,
        parents: Vec<Tensor>,
        backward_fn: Option<BackwardFn>,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(Vec::new()),
                requires_grad,
                name,
                parents,
                backward_fn,
            }),
        }
    }

    /// Constant (untracked) tensor.
    pub fn constant(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::build(shape.to_vec(), data, false, None, Vec::new(), None)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::constant(&[], vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::constant(shape, vec![0.0; shape.iter().product()])
    }

    /// Named trainable parameter.
    pub fn param(name: &str, shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::build(shape.to_vec(), data, true, Some(name.to_string()), Vec::new(), None)
    }

    /// Op output; tracks the tape only when some parent is trainable.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward_fn: BackwardFn,
    ) -> Tensor {
        let track = parents.iter().any(|p| p.inner.requires_grad);
        if track {
            Tensor::build(shape, data, true, None, parents, Some(backward_fn))
        } else {
            Tensor::build(shape, data, false, None, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn name(&self) -> Option<&str> {
        self.inner.name.as_deref()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    /// Overwrite values in place (optimizer updates, checkpoint load).
    pub fn set_data(&self, values: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data length mismatch");
        d.copy_from_slice(values);
    }

    /// Single f64 value of a scalar (or one-element) tensor.
    pub fn item(&self) -> f64 {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() on non-scalar tensor");
        d[0]
    }

    pub fn grad(&self) -> Ref<'_, Vec<f64>> {
        self.inner.grad.borrow()
    }

    pub fn zero_grad(&self) {
        let n = self.len();
        let mut g = self.inner.grad.borrow_mut();
        g.clear();
        g.resize(n, 0.0);
    }

    pub(crate) fn accumulate_grad(&self, contribution: impl Iterator<Item = (usize, f64)>) {
        let mut g = self.inner.grad.borrow_mut();
        if g.is_empty() {
            g.resize(self.inner.shape.iter().product(), 0.0);
        }
        for (i, v) in contribution {
            g[i] += v;
        }
    }

    fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    /// Reverse-mode gradient accumulation from a scalar loss. Zeroes the
    /// gradients of every tensor in the reachable graph first.
    pub fn backward(&self) -> Result<(), NeuralError> {
        if self.len() != 1 {
            return Err(NeuralError::NotScalar {
                shape: format!("{:?}", self.shape()),
            });
        }
        if !self.inner.requires_grad {
            return Err(NeuralError::Detached);
        }
        // iterative post-order topological sort over the tape
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.ptr_id());
        while let Some((node, child_idx)) = stack.pop() {
            let next_child = node
                .inner
                .parents
                .iter()
                .skip(child_idx)
                .enumerate()
                .find(|(_, p)| p.inner.requires_grad && !visited.contains(&p.ptr_id()));
            match next_child {
                Some((offset, parent)) => {
                    let parent = parent.clone();
                    visited.insert(parent.ptr_id());
                    stack.push((node, child_idx + offset + 1));
                    stack.push((parent, 0));
                }
                None => order.push(node),
            }
        }
        for node in &order {
            node.zero_grad();
        }
        self.inner.grad.borrow_mut()[0] = 1.0;
        for node in order.iter().rev() {
            if let Some(f) = &node.inner.backward_fn {
                f(node);
            }
        }
        Ok(())
    }
}

/// Deep value copy with no tape history; keeps the name. Used for target
/// networks and frozen policy snapshots.
pub fn detached_copy(t: &Tensor) -> Tensor {
    Tensor::build(
        t.shape().to_vec(),
        t.data().clone(),
        false,
        t.name().map(|s| s.to_string()),
        Vec::new(),
        None,
    )
}
