//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use tape::{dropout_mask, Gradients, Tape, Var, LOG_CLAMP};
pub use tensor::Tensor;

/// Row-wise `softmax(g / t)` without recording anything.
pub fn softmax_t(g: &Tensor, t: f64) -> crate::Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(g.clone());
    let y = tape.softmax_t(x, t)?;
    Ok(tape.value(y).clone())
}

/// Row-wise `log_softmax(g / t)` without recording anything.
pub fn log_softmax_t(g: &Tensor, t: f64) -> crate::Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(g.clone());
    let y = tape.log_softmax_t(x, t)?;
    Ok(tape.value(y).clone())
}
