//! Dense tensors, reverse-mode differentiation, and optimization.

pub mod gradcheck;
mod graph;
pub mod mixture;
mod optim;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
