//! Vision Transformer engine for binary image classification.
//!
//! The crate covers the full pipeline: dataset ingestion and preprocessing
//! ([`data`]), dense tensor kernels with hand-written gradients
//! ([`kernels`]), the transformer itself ([`model`]), cross-entropy/Adam
//! training with a binary checkpoint format ([`train`]), evaluation metrics
//! ([`metrics`]) and timing/memory profiling ([`profiler`]).
//!
//! Every computation is deterministic: reductions run in a fixed order and
//! all randomness flows from explicit seeds.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod profiler;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
