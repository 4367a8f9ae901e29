//! Numeric core for contribution-aware multi-agent classification.
//!
//! `N` agent heads each read one input partition and emit class logits. A
//! learnable agent-decision matrix on the `N x C` simplex fuses them, a global
//! head anchors the fusion, and a small MLP produces the final logits. Training
//! combines binary cross-entropy with a policy-gradient credit term and a KL
//! pull of the decision matrix toward rectified Monte-Carlo Shapley values.
//!
//! The crate is `no_std` (with `alloc`). All transcendental functions go
//! through `libm`, so results are bit-identical across platforms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adam;
pub mod data;
mod error;
pub mod fd;
pub mod game;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Matrix;
