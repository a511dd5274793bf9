//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every value produced while building a graph is appended to the tape, so
//! operation order is a topological order by construction. `backward` walks
//! the record once, last to first.

use crate::error::{Error, Result};
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train mode uses batch statistics and active dropout; infer mode uses running
/// statistics and disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Operation kinds, for graph inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv1d,
    Relu,
    BatchNorm,
    Dropout,
    Concat,
    SliceChannels,
    Add,
    Affine,
    Embed,
    Softmax,
    MaskedCrossEntropy,
    Sum,
    WeightedSum,
}

#[derive(Debug)]
pub(crate) enum Op<S> {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    Relu {
        input: Var,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<S>,
        inv_std: Vec<S>,
        batch_stats: bool,
    },
    Dropout {
        input: Var,
        keep: Vec<bool>,
        scale: S,
    },
    Concat {
        parts: Vec<Var>,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Affine {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Embed {
        table: Var,
        rows: Vec<Option<usize>>,
    },
    Softmax {
        input: Var,
    },
    MaskedCrossEntropy {
        probs: Var,
        labels: Vec<u8>,
        mask: Vec<bool>,
    },
    Sum {
        input: Var,
    },
    WeightedSum {
        input: Var,
        weights: Vec<S>,
    },
}

impl<S> Op<S> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::Relu { .. } => OpKind::Relu,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Concat { .. } => OpKind::Concat,
            Op::SliceChannels { .. } => OpKind::SliceChannels,
            Op::Add { .. } => OpKind::Add,
            Op::Affine { .. } => OpKind::Affine,
            Op::Embed { .. } => OpKind::Embed,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::MaskedCrossEntropy { .. } => OpKind::MaskedCrossEntropy,
            Op::Sum { .. } => OpKind::Sum,
            Op::WeightedSum { .. } => OpKind::WeightedSum,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv1d { input, kernel, bias } => vec![*input, *kernel, *bias],
            Op::BatchNorm {
                input, gamma, beta, ..
            } => vec![*input, *gamma, *beta],
            Op::Affine {
                input, weight, bias, ..
            } => vec![*input, *weight, *bias],
            Op::Concat { parts } => parts.clone(),
            Op::Add { a, b } => vec![*a, *b],
            Op::Embed { table, .. } => vec![*table],
            Op::MaskedCrossEntropy { probs, .. } => vec![*probs],
            Op::Relu { input }
            | Op::Dropout { input, .. }
            | Op::SliceChannels { input, .. }
            | Op::Softmax { input }
            | Op::Sum { input }
            | Op::WeightedSum { input, .. } => vec![*input],
        }
    }
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    retain_grad: bool,
}

/// Gradient contributions produced by one backward rule.
pub(crate) type Contributions<S> = Vec<(Var, Vec<S>)>;

#[derive(Debug, Default)]
pub struct Tape<S: Scalar = f32> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf. Its `requires_grad` flag decides whether gradients flow into it.
    pub fn leaf(&mut self, tensor: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            retain_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub(crate) fn push(&mut self, mut value: Tensor<S>, op: Op<S>) -> Var {
        let requires = op.inputs().iter().any(|v| self.nodes[v.0].value.requires_grad());
        value.set_requires_grad(requires);
        self.nodes.push(Node {
            value,
            op,
            retain_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor<S> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn data(&self, var: Var) -> &[S] {
        self.nodes[var.0].value.data()
    }

    pub fn grad(&self, var: Var) -> Option<&[S]> {
        self.nodes[var.0].value.grad()
    }

    /// Keep the gradient of an intermediate value after `backward`.
    pub fn retain_grad(&mut self, var: Var) {
        self.nodes[var.0].retain_grad = true;
    }

    pub fn kind(&self, var: Var) -> OpKind {
        self.nodes[var.0].op.kind()
    }

    pub fn count_ops(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    /// Which ReLU outputs are positive, over every ReLU on the tape in order.
    /// Two evaluations of the same graph are on the same linear piece iff these agree.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter(|n| n.op.kind() == OpKind::Relu)
            .flat_map(|n| n.value.data().iter().map(|&v| v > S::zero()))
            .collect()
    }

    /// Propagate d(loss)/d(value) to every recorded value that requires a gradient.
    ///
    /// Leaves and values marked with [`Tape::retain_grad`] keep their gradients;
    /// intermediate gradients are released as soon as they have been consumed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        if !loss_value.requires_grad() {
            return Ok(());
        }
        self.nodes[loss.0].value.accumulate_grad(&[S::one()]);
        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].value.take_grad() else {
                continue;
            };
            let contributions = ops::backward_rule(self, Var(i), &grad)?;
            for (target, delta) in contributions {
                debug_assert!(target.0 < i, "tape order violated");
                let node = &mut self.nodes[target.0];
                if node.value.requires_grad() {
                    node.value.accumulate_grad(&delta);
                }
            }
            if self.nodes[i].retain_grad {
                self.nodes[i].value.set_grad(Some(grad));
            }
        }
        Ok(())
    }

    pub(crate) fn op(&self, var: Var) -> &Op<S> {
        &self.nodes[var.0].op
    }

    pub(crate) fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].value.requires_grad()
    }
}
