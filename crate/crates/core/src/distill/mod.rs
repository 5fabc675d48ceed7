//! Vanilla and simplified knowledge distillation.
//!
//! The simplified path softens teacher logits with a temperature-scaled
//! log-softmax, lets a learning simplifier produce a correction Δ, and
//! distills the student toward `soften(g_t) + Δ`. Student and simplifier are
//! updated from the same loss.

mod config;
mod loss;
mod simplifier;
mod step;

pub use config::{warmup_weight, DistillConfig, Method, SimplifierConfig, SofteningConfig};
pub use loss::{kd_loss, skd_logits, skd_loss, soften, weighted_total};
pub use simplifier::{AttentionSimplifier, FcSimplifier, Simplifier, SimplifierTrace};
pub use step::{
    forward, joint_step, record, step_with_teacher_logits, Forward, Learner, Recorded, StepLosses,
};

/// Learning rate of the simplifier optimizer.
pub const SIMPLIFIER_LR: f64 = 3e-5;
/// Weight decay of the simplifier optimizer.
pub const SIMPLIFIER_WEIGHT_DECAY: f64 = 5e-4;
