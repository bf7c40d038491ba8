//! Minimal reverse-mode autodiff over 4-D `N×C×H×W` tensors.
//!
//! Every operation that consumes a tensor with `requires_grad` records a
//! backward closure on its output. [`Tensor::backward`] walks that graph in
//! reverse topological order exactly once per node and accumulates gradients
//! into the `requires_grad` leaves (model parameters). Intermediate gradients
//! live only for the duration of a backward pass.

mod checkpoint;
mod conv;
mod ops;
mod optim;

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, DType, Entry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use conv::conv_output_len;
pub use ops::*;
pub use optim::{adam_step, AdamConfig, AdamState};

/// Tensor layout `(batch, channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Shape {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }

    /// Shape of a flat vector stored along the channel axis, e.g. BatchNorm affine parameters.
    pub const fn vector(len: usize) -> Self {
        Shape::new(1, len, 1, 1)
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }
}

impl From<(usize, usize, usize, usize)> for Shape {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Shape::new(n, c, h, w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// Backward rule for one recorded op: receives the output gradient and a mask
/// of which inputs need a gradient, returns one optional gradient per input.
pub(crate) type BackwardFn = dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync;

struct GradFn {
    name: &'static str,
    inputs: Vec<Tensor>,
    backward: Box<BackwardFn>,
}

struct Node {
    id: u64,
    shape: Shape,
    data: RwLock<Vec<f64>>,
    grad: Mutex<Option<Vec<f64>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn>,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Run `f` without recording any backward closures on this thread.
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

/// Shared handle to a node of the computation graph.
#[derive(Clone)]
pub struct Tensor {
    node: Arc<Node>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &self.node.grad_fn.as_ref().map(|g| g.name))
            .finish()
    }
}

/// Counters collected during one backward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BackwardStats {
    /// Graph nodes whose gradient was propagated (each node counts once).
    pub nodes_visited: usize,
    /// Leaves that received a gradient.
    pub leaves_updated: usize,
}

impl Tensor {
    fn make(shape: Shape, data: Vec<f64>, requires_grad: bool, grad_fn: Option<GradFn>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                grad_fn,
            }),
        }
    }

    pub fn from_vec(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape} holds {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Self::make(shape, data, false, None))
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: impl Into<Shape>, value: f64) -> Self {
        let shape = shape.into();
        Self::make(shape, vec![value; shape.numel()], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::make(Shape::scalar(), vec![value], false, None)
    }

    /// Gaussian `N(0, std²)` samples.
    pub fn randn(shape: impl Into<Shape>, std: f64, rng: &mut Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect();
        Self::make(shape, data, false, None)
    }

    /// Trainable leaf.
    pub fn parameter(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        Ok(Self::from_vec(shape, data)?.requires_grad_(true))
    }

    /// Fresh leaf with the same values and the given `requires_grad` flag.
    pub fn requires_grad_(self, requires_grad: bool) -> Self {
        if self.node.requires_grad == requires_grad && self.node.grad_fn.is_none() {
            return self;
        }
        let data = self.to_vec();
        Self::make(self.shape(), data, requires_grad, None)
    }

    /// Copy of the values cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::make(self.shape(), self.to_vec(), false, None)
    }

    pub fn shape(&self) -> Shape {
        self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.numel()
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    /// Name of the op that produced this tensor, if it was recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.name)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<f64>> {
        self.node.data.read()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.node.data.read().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let data = self.node.data.read();
        assert_eq!(data.len(), 1, "item() on a tensor of shape {}", self.node.shape);
        data[0]
    }

    /// Overwrite values in place. Used by optimizers and checkpoint loading.
    pub fn assign(&self, values: &[f64]) -> Result<()> {
        let mut data = self.node.data.write();
        if data.len() != values.len() {
            return Err(Error::Dimension(format!(
                "assign of {} values into tensor of shape {}",
                values.len(),
                self.node.shape
            )));
        }
        data.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.node.data.write());
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.lock().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock() = None;
    }

    pub fn grad_norm(&self) -> f64 {
        self.node
            .grad
            .lock()
            .as_ref()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .unwrap_or(0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.node.data.read().iter().all(|v| v.is_finite())
    }

    /// Output of a differentiable op. The backward closure is only kept when
    /// gradients are enabled and at least one input takes part in the graph.
    pub(crate) fn from_op(
        shape: Shape,
        data: Vec<f64>,
        name: &'static str,
        inputs: Vec<Tensor>,
        backward: Box<BackwardFn>,
    ) -> Self {
        let tracked = grad_enabled() && inputs.iter().any(Tensor::requires_grad);
        if !tracked {
            return Self::make(shape, data, false, None);
        }
        Self::make(shape, data, true, Some(GradFn { name, inputs, backward }))
    }

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls.
    pub fn backward(&self) -> Result<BackwardStats> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {}",
                self.shape()
            )));
        }
        let mut stats = BackwardStats::default();
        if !self.requires_grad() {
            return Ok(stats);
        }

        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);

        for tensor in order.iter().rev() {
            let Some(grad) = pending.remove(&tensor.id()) else {
                continue;
            };
            stats.nodes_visited += 1;
            match &tensor.node.grad_fn {
                None => {
                    if tensor.requires_grad() {
                        let mut slot = tensor.node.grad.lock();
                        match slot.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
                            None => *slot = Some(grad),
                        }
                        stats.leaves_updated += 1;
                    }
                }
                Some(grad_fn) => {
                    let needs: Vec<bool> = grad_fn.inputs.iter().map(Tensor::requires_grad).collect();
                    let input_grads = (grad_fn.backward)(&grad, &needs);
                    debug_assert_eq!(input_grads.len(), grad_fn.inputs.len());
                    for (input, g) in grad_fn.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel(), "gradient size from {}", grad_fn.name);
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(stats)
    }

    /// Nodes reachable from `self` in post-order (inputs before consumers).
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((tensor, expanded)) = stack.pop() {
            if expanded {
                order.push(tensor);
                continue;
            }
            if !seen.insert(tensor.id()) {
                continue;
            }
            stack.push((tensor.clone(), true));
            if let Some(grad_fn) = &tensor.node.grad_fn {
                for input in &grad_fn.inputs {
                    if input.requires_grad() && !seen.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}
