//! Small reverse-mode autodiff for 1D convolutional networks.
//!
//! Only what a conditional WGAN-GP over short multichannel sequences needs:
//! elementwise algebra, broadcasting, stride-1 (transposed) convolutions,
//! embedding lookups and channel concatenation, all twice-differentiable.

mod conv;
mod graph;
mod optim;
mod tensor;

pub use conv::{conv1d, conv1d_input_grad, conv1d_weight_grad, ConvGeom};
pub use graph::{Graph, Var};
pub use optim::Adam;
pub use tensor::{Real, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("{op}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch { op: &'static str, expected: Vec<usize>, got: Vec<usize> },
}
