use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

/// Affine map `y = x · Wᵀ + b` with `W: out×in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LinearLayer {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Weights ~ N(0, 2 / fan_in), zero bias.
    pub fn he<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        LinearLayer {
            weight: Tensor::new(vec![outputs, inputs], data).expect("sized by construction"),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Puts weight and bias on the tape, in that order.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> [Var; 2] {
        [
            tape.leaf(self.weight.clone(), trainable),
            tape.leaf(self.bias.clone(), trainable),
        ]
    }
}

/// Records `x · Wᵀ + b`.
pub fn linear(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let wt = tape.transpose(weight)?;
    let y = tape.matmul(x, wt)?;
    tape.add_row(y, bias)
}
