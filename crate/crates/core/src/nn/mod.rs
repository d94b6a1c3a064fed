//! Minimal dense tensor stack: matrices, a reverse-mode tape, dense and graph
//! convolution layers and an adaptive-moment parameter updater.

mod adam;
mod layers;
mod matrix;
mod tape;

pub use adam::ParamUpdater;
pub use layers::{gcn_forward, normalize_adjacency, DenseLayer, GcnLayer};
pub use matrix::Matrix;
pub use tape::{Activation, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("row index out of range in {op} (rows = {rows})")]
    Index { op: &'static str, rows: usize },
    #[error("backward called without a recorded forward pass")]
    EmptyTape,
    #[error("loss must be a 1x1 value, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("parameter/gradient count mismatch: {params} vs {grads}")]
    ParamCount { params: usize, grads: usize },
}
