//! One-dimensional neural active manifold reduction of scalar models,
//! sensitivity analysis along the learned manifold and multifidelity Monte
//! Carlo in a shared latent space.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod models;
pub mod multifidelity;
pub mod neuram;
pub mod nn;
pub mod sensitivity;
pub mod util;

pub use error::{Error, Result};
