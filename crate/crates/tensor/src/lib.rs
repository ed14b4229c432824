//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Every op records itself on an implicit graph; calling [`Tensor::backward`]
//! on a scalar accumulates gradients into every leaf created with
//! `requires_grad`. The crate also carries the supporting cast a training
//! loop needs: a name-keyed [`param::ParamStore`], deterministic seeding
//! helpers, finite-difference [`gradcheck::grad_check`], and byte-stable
//! checkpoint serialization.

mod error;
mod ops;
mod tensor;

pub mod checkpoint;
pub mod gradcheck;
pub mod param;
pub mod rng;

pub use error::TensorError;
pub use gradcheck::grad_check;
pub use param::{InitSpec, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
