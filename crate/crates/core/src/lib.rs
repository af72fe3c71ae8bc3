//! Kolmogorov–Arnold networks with radial-basis and Chebyshev edge functions,
//! first-layer conditioning diagnostics, and the training/experiment harness
//! built on top of them.

pub mod autodiff;
pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod training;

pub use error::{KanError, Result};
