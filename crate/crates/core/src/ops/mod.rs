//! Forward operations recorded on a [`Tape`](crate::tape::Tape) and their backward rules.

pub mod conv;
mod dense;
mod elementwise;
pub mod norm;
mod shape;
pub mod softmax;

pub use conv::{head_padding, tail_padding};
pub use norm::{BatchNormSettings, RunningStats};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{Contributions, Op, Tape, Var};

pub(crate) fn backward_rule<S: Scalar>(tape: &Tape<S>, node: Var, grad: &[S]) -> Result<Contributions<S>> {
    Ok(match tape.op(node) {
        Op::Leaf => Vec::new(),
        Op::Conv1d { input, kernel, bias } => conv::backward(tape, *input, *kernel, *bias, grad)?,
        Op::Relu { input } => elementwise::relu_backward(tape, node, *input, grad),
        Op::BatchNorm {
            input,
            gamma,
            beta,
            mean,
            inv_std,
            batch_stats,
        } => norm::backward(tape, *input, *gamma, *beta, mean, inv_std, *batch_stats, grad),
        Op::Dropout { input, keep, scale } => elementwise::dropout_backward(*input, keep, *scale, grad),
        Op::Concat { parts } => shape::concat_backward(tape, parts, grad),
        Op::SliceChannels { input, start } => shape::slice_backward(tape, *input, *start, grad),
        Op::Add { a, b } => vec![(*a, grad.to_vec()), (*b, grad.to_vec())],
        Op::Affine { input, weight, bias } => dense::affine_backward(tape, *input, *weight, *bias, grad),
        Op::Embed { table, rows } => dense::embed_backward(tape, *table, rows, grad),
        Op::Softmax { input } => softmax::softmax_backward(tape, node, *input, grad),
        Op::MaskedCrossEntropy { probs, labels, mask } => {
            softmax::cross_entropy_backward(tape, *probs, labels, mask, grad)
        }
        Op::Sum { input } => vec![(*input, vec![grad[0]; tape.value(*input).numel()])],
        Op::WeightedSum { input, weights } => {
            vec![(*input, weights.iter().map(|&w| w * grad[0]).collect())]
        }
    })
}
