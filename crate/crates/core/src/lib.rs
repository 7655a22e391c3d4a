//! Negative-sampling experimentation engine for self-attentive sequential
//! recommendation.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`]: interaction ingestion, global temporal splitting,
//!   popularity tables and head/mid/tail cohorts.
//! * [`sampler`]: the six negative-sampling strategies and the logical
//!   negative tensor they produce.
//! * [`seqmodel`]: a causal self-attention encoder with hand-derived
//!   gradients, sampled binary cross-entropy, Adam and full-corpus retrieval.
//! * [`pipeline`]: mini-batch generation, the oversampling reuse buffer and
//!   the epoch loop with validation-based checkpoint selection.
//! * [`metrics`]: hit rate, NDCG, popularity-stratified metrics, Gini/Balance,
//!   the popularity baseline and multi-run aggregation.
//! * [`runner`]: experiment configuration, seeded repeats, sweeps and report
//!   emission.
//!
//! Model math is generic over the floating-point scalar (see [`Scalar`]); the
//! aliases below fix the common choices.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod runner;
pub mod sampler;
pub mod scalar;
pub mod seqmodel;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Internal item id. `0` is the padding id; real items live in `1..=num_items`.
pub type ItemId = u32;

/// Double-precision model, the default for training and evaluation.
pub type SasRec = seqmodel::SasRecModel<f64>;
/// Single-precision model.
pub type SasRec32 = seqmodel::SasRecModel<f32>;
/// Double-precision parameter set.
pub type Params = seqmodel::Params<f64>;
/// Double-precision Adam state.
pub type Adam = seqmodel::Adam<f64>;
