//! Matrix-level reverse-mode tape.
//!
//! Nodes are appended in evaluation order; each keeps its forward value so the
//! backward sweep can reuse it. A node only receives a gradient when it, or one
//! of its ancestors, was created with `needs_grad`.

use crate::models::Activation;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Leaf,
    /// `input · weightᵀ`
    Linear {
        input: NodeId,
        weight: NodeId,
    },
    /// `input + bias` with a `1 x m` bias broadcast over rows
    AddBias {
        input: NodeId,
        bias: NodeId,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    Activate {
        input: NodeId,
        activation: Activation,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor2<T>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Applies an activation row-wise. Softmax subtracts the row maximum first.
pub fn activate<T: Scalar>(x: &Tensor2<T>, activation: Activation) -> Tensor2<T> {
    match activation {
        Activation::Linear => x.clone(),
        Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Tanh => x.map(T::tanh),
        Activation::Softmax => {
            let mut out = x.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            out
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor2<T>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor2<T>, needs_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId) -> NodeId {
        let value = self.value(input).matmul_transb(self.value(weight));
        let needs = self.needs(input) || self.needs(weight);
        self.push(value, Op::Linear { input, weight }, needs)
    }

    pub fn add_bias(&mut self, input: NodeId, bias: NodeId) -> NodeId {
        let value = self.value(input).add_row(self.value(bias).as_slice());
        let needs = self.needs(input) || self.needs(bias);
        self.push(value, Op::AddBias { input, bias }, needs)
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> NodeId {
        let value = self.value(lhs).add(self.value(rhs));
        let needs = self.needs(lhs) || self.needs(rhs);
        self.push(value, Op::Add { lhs, rhs }, needs)
    }

    pub fn activate(&mut self, input: NodeId, activation: Activation) -> NodeId {
        let value = activate(self.value(input), activation);
        let needs = self.needs(input);
        self.push(value, Op::Activate { input, activation }, needs)
    }

    /// Propagates `seed = ∂L/∂output` back through every recorded op up to
    /// `output`, visiting each exactly once in reverse recording order.
    pub fn backward(&self, output: NodeId, seed: Tensor2<T>) -> Gradients<T> {
        assert_eq!(seed.shape(), self.value(output).shape(), "seed shape");
        self.backward_many(&[(output, seed)])
    }

    /// Backward sweep with several seeded outputs (their contributions add).
    pub fn backward_many(&self, seeds: &[(NodeId, Tensor2<T>)]) -> Gradients<T> {
        let last = seeds.iter().map(|(id, _)| *id).max().unwrap_or(0);
        let mut grads: Vec<Option<Tensor2<T>>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            accumulate(&mut grads, *id, seed.clone());
        }
        let mut visited = Vec::new();
        for id in (0..=last).rev() {
            let node = &self.nodes[id];
            if node.op == Op::Leaf || !node.needs_grad {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            visited.push(id);
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { input, weight } => {
                    if self.needs(input) {
                        let dx = upstream.matmul(self.value(weight));
                        accumulate(&mut grads, input, dx);
                    }
                    if self.needs(weight) {
                        let dw = upstream.transpose_matmul(self.value(input));
                        accumulate(&mut grads, weight, dw);
                    }
                }
                Op::AddBias { input, bias } => {
                    if self.needs(bias) {
                        let db = Tensor2::row_vector(&upstream.column_sums());
                        accumulate(&mut grads, bias, db);
                    }
                    if self.needs(input) {
                        accumulate(&mut grads, input, upstream);
                    }
                }
                Op::Add { lhs, rhs } => {
                    if self.needs(rhs) {
                        accumulate(&mut grads, rhs, upstream.clone());
                    }
                    if self.needs(lhs) {
                        accumulate(&mut grads, lhs, upstream);
                    }
                }
                Op::Activate { input, activation } => {
                    if self.needs(input) {
                        let dx = activation_backward(activation, self.value(input), &node.value, upstream);
                        accumulate(&mut grads, input, dx);
                    }
                }
            }
        }
        // Interior gradients were taken above; what remains belongs to leaves.
        Gradients { grads, visited }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor2<T>>], id: NodeId, g: Tensor2<T>) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn activation_backward<T: Scalar>(
    activation: Activation,
    input: &Tensor2<T>,
    output: &Tensor2<T>,
    mut upstream: Tensor2<T>,
) -> Tensor2<T> {
    match activation {
        Activation::Linear => upstream,
        Activation::Relu => {
            // Subgradient at exactly zero is zero.
            for (g, &x) in upstream.as_mut_slice().iter_mut().zip(input.as_slice()) {
                if x <= T::zero() {
                    *g = T::zero();
                }
            }
            upstream
        }
        Activation::Tanh => {
            for (g, &y) in upstream.as_mut_slice().iter_mut().zip(output.as_slice()) {
                *g *= T::one() - y * y;
            }
            upstream
        }
        Activation::Softmax => {
            for r in 0..upstream.rows() {
                let y = output.row(r);
                let g = upstream.row_mut(r);
                let mut dot = T::zero();
                for (&gi, &yi) in g.iter().zip(y) {
                    dot += gi * yi;
                }
                for (gi, &yi) in g.iter_mut().zip(y) {
                    *gi = yi * (*gi - dot);
                }
            }
            upstream
        }
    }
}

/// Result of a backward sweep: gradients for every leaf that needed one.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor2<T>>>,
    visited: Vec<NodeId>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor2<T>> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    /// Gradient for `id`, or zeros of the given shape when nothing reached it.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> Tensor2<T> {
        self.get(id).cloned().unwrap_or_else(|| Tensor2::zeros(rows, cols))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor2<T>> {
        self.grads.get_mut(id).and_then(Option::take)
    }

    /// Op nodes processed by the sweep, in processing order.
    pub fn visited(&self) -> &[NodeId] {
        &self.visited
    }
}
