//! Dense row-major f64 tensors with tape-based reverse-mode differentiation.
//!
//! Every operation whose inputs require gradients records a [`TapeNode`] on
//! its output: the op name, the input tensors and a backward closure holding
//! whatever forward values the rule needs. [`Tensor::backward`] walks that
//! graph once in reverse topological order and accumulates `d root / d leaf`
//! into every reachable leaf created with [`Tensor::param`].
//!
//! Tensors are immutable after creation; only the gradient buffer of a leaf
//! changes. Data buffers are reference counted, so `reshape` and `detach`
//! never copy.

mod conv;
mod gemm;
mod grad_check;
pub mod io;
mod ops;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::{Error, Result};

pub use grad_check::grad_check;

pub(crate) use gemm::gemm;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Maximum supported rank.
pub const MAX_RANK: usize = 4;

type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

/// One recorded operation: which op produced a tensor, from which inputs,
/// and how to map the output gradient back onto those inputs.
pub struct TapeNode {
    op: &'static str,
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    tape: Option<TapeNode>,
}

/// A dense tensor of rank ≤ 4 (N, C, H, W by convention).
#[derive(Clone)]
pub struct Tensor(Arc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.0.shape);
        if self.numel() <= 16 {
            s.field("data", &self.0.data);
        }
        s.field("requires_grad", &self.0.requires_grad);
        if let Some(t) = &self.0.tape {
            s.field("op", &t.op);
        }
        s.finish()
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.len() > MAX_RANK {
        return Err(Error::Shape(format!(
            "rank {} exceeds the maximum of {MAX_RANK}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero extent in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    fn from_parts(
        shape: Vec<usize>,
        data: Arc<Vec<f64>>,
        requires_grad: bool,
        tape: Option<TapeNode>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            tape,
        }))
    }

    /// A constant (non-differentiable) tensor.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self::from_parts(
            shape.to_vec(),
            Arc::new(data),
            false,
            None,
        ))
    }

    /// A trainable leaf: gradients reaching it are accumulated by `backward`.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let t = Self::new(data, shape)?;
        Ok(t.requires_grad_(true))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Self::new(vec![value; n], shape)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), Arc::new(vec![value]), false, None)
    }

    /// Returns a leaf sharing this tensor's data with the given grad flag.
    pub fn requires_grad_(&self, flag: bool) -> Self {
        Self::from_parts(self.0.shape.clone(), self.0.data.clone(), flag, None)
    }

    /// A constant view of the same data, cut off from the tape.
    pub fn detach(&self) -> Self {
        self.requires_grad_(false)
    }

    /// Result of an operation. The tape node is kept only when some input
    /// requires gradients.
    pub(crate) fn from_op(
        data: impl Into<Arc<Vec<f64>>>,
        shape: Vec<usize>,
        op: &'static str,
        inputs: Vec<Tensor>,
        backward: impl Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    ) -> Self {
        let rg = inputs.iter().any(Tensor::requires_grad);
        let tape = rg.then(|| TapeNode {
            op,
            inputs,
            backward: Box::new(backward),
        });
        Self::from_parts(shape, data.into(), rg, tape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.as_ref().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// True for tensors not produced by a recorded operation.
    pub fn is_leaf(&self) -> bool {
        self.0.tape.is_none()
    }

    /// Name of the op that produced this tensor, if recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.tape.as_ref().map(|t| t.op)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::Shape(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.0.data[0])
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Same tensor identity (not value equality).
    pub fn same(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Back-propagates from a scalar root.
    ///
    /// Gradients accumulate into the leaves' buffers: calling this twice
    /// without [`Tensor::zero_grad`] sums both contributions.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarRoot(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.0.id, vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.0.id) else {
                continue;
            };
            match &t.0.tape {
                None => {
                    if t.0.requires_grad {
                        let mut slot = t.0.grad.lock().expect("grad lock poisoned");
                        match slot.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => *slot = Some(g),
                        }
                    }
                }
                Some(node) => {
                    let input_grads = (node.backward)(&g);
                    debug_assert_eq!(input_grads.len(), node.inputs.len());
                    for (inp, ig) in node.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(ig.len(), inp.numel(), "grad of {:?}", node.op);
                        match grads.get_mut(&inp.0.id) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(inp.0.id, ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the grad-requiring subgraph; each node appears once.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        // (node, children already pushed)
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.0.id) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.0.tape {
                for inp in &node.inputs {
                    if inp.requires_grad() && !visited.contains(&inp.0.id) {
                        stack.push((inp.clone(), false));
                    }
                }
            }
        }
        order
    }
}
