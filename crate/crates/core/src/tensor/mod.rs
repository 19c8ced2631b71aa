//! A small reverse-mode autograd engine.
//!
//! Every [`Tensor`] is an immutable, reference-counted node. Operations on
//! tensors that require gradients record a backward closure together with
//! their parents; [`Tensor::backward`] walks that graph in reverse
//! topological order and accumulates gradients into the leaves. The graph
//! lives exactly as long as the tensors that reference it, and
//! [`no_grad`] suppresses recording entirely.

mod elem;
pub mod gradcheck;
mod ops;

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub use elem::Elem;
pub(crate) use elem::{gemm, View};

use crate::error::{Error, Result};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with graph recording disabled on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

type BackwardFn<E> = Box<dyn Fn(&[E], &[E]) -> Vec<Option<Vec<E>>> + Send + Sync>;

struct GradFn<E: Elem> {
    parents: Vec<Tensor<E>>,
    /// `(output data, output grad) -> per-parent grads`, aligned with `parents`.
    apply: BackwardFn<E>,
}

struct Node<E: Elem> {
    id: usize,
    shape: Vec<usize>,
    data: Vec<E>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<E>>>,
    grad_fn: Option<GradFn<E>>,
}

/// N-dimensional row-major array with optional gradient tracking.
pub struct Tensor<E: Elem = f32>(Arc<Node<E>>);

impl<E: Elem> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<E: Elem> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("recorded", &self.0.grad_fn.is_some())
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<E: Elem> Tensor<E> {
    fn build(data: Vec<E>, shape: Vec<usize>, requires_grad: bool, grad_fn: Option<GradFn<E>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            grad_fn,
        }))
    }

    /// Constant tensor (no gradient).
    pub fn new(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape, false)
    }

    /// Leaf tensor; with `requires_grad` it accumulates gradients on backward.
    pub fn leaf(data: Vec<E>, shape: &[usize], requires_grad: bool) -> Result<Self> {
        if shape.contains(&0) && !data.is_empty() {
            return Err(Error::Shape(format!("zero extent in {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::build(data, shape.to_vec(), requires_grad, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(vec![E::zero(); numel(shape)], shape.to_vec(), false, None)
    }

    pub fn scalar(v: E) -> Self {
        Self::build(vec![v], vec![], false, None)
    }

    pub fn from_f32(data: &[f32], shape: &[usize]) -> Result<Self> {
        Self::new(data.iter().map(|&v| E::lit(v as f64)).collect(), shape)
    }

    /// Records `data` as the output of an op over `parents`, if recording is
    /// active and any parent needs a gradient.
    pub(crate) fn from_op(
        data: Vec<E>,
        shape: Vec<usize>,
        parents: &[&Tensor<E>],
        apply: impl Fn(&[E], &[E]) -> Vec<Option<Vec<E>>> + Send + Sync + 'static,
    ) -> Self {
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if record {
            let grad_fn = GradFn {
                parents: parents.iter().map(|p| (*p).clone()).collect(),
                apply: Box::new(apply),
            };
            Self::build(data, shape, true, Some(grad_fn))
        } else {
            Self::build(data, shape, false, None)
        }
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[E] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    pub fn item(&self) -> Result<E> {
        if self.numel() != 1 {
            return Err(Error::Shape(format!("item() on shape {:?}", self.shape())));
        }
        Ok(self.0.data[0])
    }

    pub fn to_vec_f32(&self) -> Vec<f32> {
        self.0.data.iter().map(|v| v.to_f32_lossy()).collect()
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// Same values, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    fn accumulate_grad(&self, g: &[E]) {
        let mut slot = self.0.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Back-propagates from a scalar, accumulating into every reachable leaf
    /// that requires gradients.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Iterative post-order DFS; reversed it is a valid processing order.
        let mut order: Vec<Tensor<E>> = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor<E>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.0.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        let mut grads: HashMap<usize, Vec<E>> = HashMap::new();
        grads.insert(self.id(), vec![E::one()]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match &t.0.grad_fn {
                Some(gf) => {
                    let parent_grads = (gf.apply)(&t.0.data, &g);
                    debug_assert_eq!(parent_grads.len(), gf.parents.len());
                    for (p, pg) in gf.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel());
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
                None => t.accumulate_grad(&g),
            }
        }
        Ok(())
    }
}
