//! Masked-encoding self-supervised pretraining for tabular data.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`graph`]: a dense f64 tensor type and a reverse-mode
//!   differentiation graph. Gradients are taken with respect to model
//!   parameters (descent) and with respect to inputs (adversarial ascent).
//! - [`backbone`]: the transformer autoencoder over per-coordinate tokens.
//!   Each coordinate becomes one token `concat(pe_j, x_j)`; masked
//!   coordinates are dropped from the encoder input and re-inserted as
//!   learnable mask tokens at the decoder.
//! - [`trainer`]: masked reconstruction pretraining with an optional
//!   adversarial reconstruction loss found by projected gradient ascent
//!   inside an L2 ball.
//! - [`downstream`]: representation extraction (no masking at inference),
//!   MLP head finetuning and evaluation.
//! - [`baselines`]: random Gaussian featurization, frozen random encoder,
//!   raw-input MLP.
//! - [`data`]: the two-circles toy generator, CSV ingestion with one-hot
//!   collapsing, train-only normalization and deterministic splits.

pub mod backbone;
pub mod baselines;
pub mod data;
pub mod downstream;
pub mod error;
pub mod graph;
pub mod rng;
pub mod runtime;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
