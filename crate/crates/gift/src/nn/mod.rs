//! Dense tensor math, reverse-mode automatic differentiation, the normalized
//! player graph, and the graph/temporal convolution blocks of the forecaster.
//!
//! Everything here is CPU-only f64. The autodiff [`autodiff::Graph`] is a
//! per-forward tape: ops compute values eagerly and record enough to replay
//! gradients in reverse. A frozen set of [`Parameter`]s can be shared
//! read-only across threads; each thread builds its own tape.

pub mod autodiff;
pub mod blocks;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod tensor;

pub use autodiff::{Graph, Var};
pub use blocks::{ResidualMode, StgcnBlockParams, StgcnStack};
pub use graph::{normalized_adjacency, PlayerGraph};
pub use tensor::{NnError, Tensor};

/// A named learnable tensor with a gradient accumulator.
///
/// Gradients are accumulated by [`autodiff::Graph::backward`] via the
/// binding returned when the parameter is placed on a tape, and must be
/// zeroed between optimizer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}
