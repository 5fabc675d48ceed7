//! Knowledge distillation on a small tape-based autodiff engine.
//!
//! Vanilla distillation matches a student to a fixed teacher. The simplified
//! variant first softens the teacher's logits and passes them through a small
//! trainable *simplifier* (self-attention across the batch, or a per-sample
//! MLP), which is optimized jointly with the student.

pub mod autodiff;
pub mod data;
pub mod distill;
pub mod harness;
mod error;
mod fsio;
pub mod metrics;
pub mod nn;
pub mod seeds;

pub use error::{Error, Result};
