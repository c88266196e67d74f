//! Reverse-mode autodiff over dense f64 tensors.
//!
//! The graph is built eagerly: every op produces a new `Tensor` holding the
//! forward value plus a one-shot backward closure that scatters the incoming
//! gradient to the op's parents. `backward()` runs a reverse topological walk
//! from the seed node. Nodes whose inputs do not require gradients record
//! nothing, so eval-mode forwards through frozen models carry no graph.

use std::cell::RefCell;
use std::rc::Rc;

type BackwardFn = Box<dyn FnOnce(&[f64])>;

pub(crate) struct TensorInner {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Shared handle to a graph node. Cloning is cheap and aliases the node.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorInner>>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must match shape product"
        );
        Tensor {
            inner: Rc::new(RefCell::new(TensorInner {
                data,
                shape,
                grad: None,
                requires_grad: false,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![1], vec![v])
    }

    pub fn requires_grad(self, flag: bool) -> Tensor {
        self.inner.borrow_mut().requires_grad = flag;
        self
    }

    pub fn requires_grad_flag(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.inner.borrow_mut().requires_grad = flag;
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn data(&self) -> std::cell::Ref<'_, Vec<f64>> {
        std::cell::Ref::map(self.inner.borrow(), |i| &i.data)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() requires a single-element tensor");
        inner.data[0]
    }

    /// Overwrites the stored values in place (shape is unchanged).
    pub fn set_data(&self, data: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len());
        inner.data.copy_from_slice(data);
    }

    /// Same values, no history: the result is a constant leaf.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(self.shape(), self.to_vec())
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    /// Removes and returns the accumulated gradient, leaving `None`.
    pub fn take_grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow_mut().grad.take()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(inner.data.len(), g.len());
        match inner.grad.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => inner.grad = Some(g.to_vec()),
        }
    }

    /// Builds an op node. `backward` receives the node's output gradient and
    /// is responsible for scattering into `parents` via `accumulate_grad`.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let track = parents.iter().any(|p| p.requires_grad_flag());
        if !track {
            return Tensor::from_vec(shape, data);
        }
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(RefCell::new(TensorInner {
                data,
                shape,
                grad: None,
                requires_grad: true,
                parents,
                backward: Some(backward),
            })),
        }
    }

    fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    /// Backpropagates from this node, seeding with a gradient of ones.
    /// Op nodes release their saved state and parent links as the walk
    /// passes them; leaf gradients stay in place for the optimizer.
    pub fn backward(&self) {
        // Iterative post-order DFS; recursion would overflow on long chains.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: std::collections::HashSet<usize> = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.ptr_id());
        while let Some((node, child_idx)) = stack.pop() {
            let next = {
                let inner = node.inner.borrow();
                inner.parents.get(child_idx).cloned()
            };
            match next {
                Some(parent) => {
                    stack.push((node, child_idx + 1));
                    if parent.requires_grad_flag() && visited.insert(parent.ptr_id()) {
                        stack.push((parent, 0));
                    }
                }
                None => order.push(node),
            }
        }

        {
            let n = self.numel();
            self.accumulate_grad(&vec![1.0; n]);
        }
        for node in order.iter().rev() {
            let (grad, backward) = {
                let mut inner = node.inner.borrow_mut();
                let backward = inner.backward.take();
                match backward {
                    Some(b) => (inner.grad.take(), Some(b)),
                    None => (None, None),
                }
            };
            if let (Some(g), Some(b)) = (grad, backward) {
                b(&g);
            }
            node.inner.borrow_mut().parents.clear();
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}
