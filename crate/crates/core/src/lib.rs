//! Aligning a tiny autoregressive code model toward faster code.
//!
//! The crate is generic over the floating-point scalar; the `*64` aliases
//! below fix it to `f64`, which is what training and the CLI use.

pub mod align;
pub mod corpus;
pub mod executor;
pub mod metrics;
pub mod minilang;
pub mod model;
pub mod pipeline;
pub mod reward;
mod scalar;

pub use scalar::{sigmoid, softplus, Scalar};

pub type Checkpoint64 = model::Checkpoint<f64>;
pub type Tensor64 = model::Tensor<f64>;
pub type Graph64 = model::Graph<f64>;
pub type ParamStore64 = model::ParamStore<f64>;
pub type RewardModel64 = reward::RewardModel<f64>;
