//! Deterministic simulator for federated split learning with client-side
//! pruning, stochastic gradient quantization, and activation dropout over a
//! modelled wireless link.
//!
//! Module map:
//! - [`tensor`], [`nn`]: dense layers and reverse-mode gradients.
//! - [`compression`]: pruning schedule and masks, quantizer, dropout.
//! - [`engine`]: clients, server, wire format, round loop.
//! - [`wireless`]: path loss, Shannon rate, latency.
//! - [`analysis`]: convergence bound evaluation and lemma checks.

pub mod analysis;
pub mod compression;
pub mod engine;
pub mod error;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod wireless;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor2;
