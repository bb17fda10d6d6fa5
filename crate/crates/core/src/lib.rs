//! Flight-chain construction and queue-theory-augmented attention models
//! for 5-class ordinal arrival-delay prediction.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`tensor`] — dense tensors with reverse-mode autodiff and Adam
//! - [`data`] — CSV ingest, schema harmonisation, vocabularies
//! - [`chains`] — flight-chain extraction, labelling, splits, `.qtc` files
//! - [`queue`] — M/M/1 residual-delay proxies
//! - [`attention`] — CBAM, SimAM, and queue-aware QT-SimAM operators
//! - [`recurrent`] — LSTM stack with optional QMogrifier gating
//! - [`model`] — the three assembled architectures
//! - [`train`] — training loop, checkpoints, history
//! - [`metrics`] — confusion matrix and P/R/F1 reporting
//! - [`synth`] — deterministic synthetic schedule generator

pub mod attention;
pub mod gradcheck;
pub mod chains;
pub mod data;
pub mod metrics;
pub mod model;
pub mod queue;
pub mod recurrent;
pub mod synth;
pub mod tensor;
pub mod train;

pub use tensor::{Element, Tensor, TensorError};
