//! Minimal dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every op as it executes; [`Graph::backward`] replays
//! the tape in reverse and returns [`Gradients`]. Parameters live outside the
//! graph in a [`ParamStore`] and are bound as leaves for each step, then
//! updated by [`Adam`].

pub mod checkpoint;
mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use graph::{sigmoid, Gradients, Graph, Var, BATCH_NORM_EPS};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamStore};
pub use tensor::Tensor;
