//! Object-centric, action-conditional forward dynamics models.
//!
//! The crate bundles everything needed to train and evaluate visual dynamics
//! predictors on a pushing ("object singulation") task:
//!
//! * [`tensor`]: dense tensors with a reverse-mode differentiation tape and the
//!   layer kinds used by the networks (dense, conv, transposed conv, max-pool,
//!   batch norm, activations, BCE/MSE losses) plus Adam.
//! * [`graphnet`]: attributed graphs and the graph-network block algebra
//!   (full block, independent block, global replacement, encode-process-decode).
//! * [`sim`]: a deterministic 2D rigid-body pushing simulator that renders
//!   RGB, depth and per-object masks and records episodes.
//! * [`models`]: graph-network predictors, the auto-predictor, the auto-encoder
//!   baseline, the losses and checkpoints.
//! * [`pipeline`]: episode-to-graph conversion, curriculum training, rollout and
//!   mean-IoU evaluation.
//!
//! Data-parallel loops (per-sample convolution, episode generation, evaluation)
//! go through [`par`], which uses rayon when the `parallel` feature is enabled
//! and falls back to plain iterators otherwise.

mod binio;
pub mod error;
pub mod graphnet;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
