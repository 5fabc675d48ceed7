//! Layers, multilayer perceptrons, and the SGD optimizer.

mod linear;
mod mlp;
mod schedule;
mod sgd;

pub use linear::{linear, LinearLayer};
pub use mlp::{Mlp, MlpSpec};
pub use schedule::LrSchedule;
pub use sgd::{Sgd, SgdConfig};

use crate::autodiff::Tensor;

/// Anything holding an ordered list of trainable tensors.
pub trait Module {
    /// Parameters in a fixed order, with stable names.
    fn named_params(&self) -> Vec<(String, &Tensor)>;

    /// Same order as [`Module::named_params`].
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}
