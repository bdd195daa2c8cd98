//! Minimal dense tensors, reverse-mode differentiation and Adam.

pub mod adam;
pub mod graph;
pub mod linalg;
pub mod tensor;

pub use adam::{AdamConfig, AdamState, Parameter};
pub use graph::{softmax, softplus, Gradients, Graph, NodeId, LOGVAR_MAX, LOGVAR_MIN};
pub use tensor::Tensor;
