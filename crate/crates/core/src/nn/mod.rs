//! Reverse-mode autodiff, activations, loss, and the Adam optimizer.

pub mod activations;
pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod tensor;

pub use activations::{clip_tx, cross_entropy, relu, sigmoid, softmax, LOG_FLOOR, TX_CLIP};
pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use graph::{AffineInput, Gradients, Graph, Var};
pub use tensor::{ParamSet, Tensor};

/// Collects the gradients of bound parameter leaves, aligned with the
/// [`ParamSet`] they were bound from.
pub fn param_grads(grads: &Gradients, bound: &[Var]) -> Vec<Option<ndarray::Array2<f64>>> {
    bound.iter().map(|&v| grads.get(v).cloned()).collect()
}
