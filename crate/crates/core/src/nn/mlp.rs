use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::{linear, LinearLayer};
use super::Module;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Layer widths from input features to class count; relu between layers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, seed: u64) -> Self {
        MlpSpec { widths, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least two widths, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "MLP widths must be positive, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    pub layers: Vec<LinearLayer>,
}

impl Mlp {
    /// He-initialized network; a pure function of `spec`.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .widths
            .windows(2)
            .map(|w| LinearLayer::he(w[0], w[1], &mut rng))
            .collect();
        Ok(Mlp {
            spec: spec.clone(),
            layers,
        })
    }

    /// Wraps explicit layers; widths must chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<LinearLayer>) -> Result<Self> {
        spec.validate()?;
        let ok = layers.len() + 1 == spec.widths.len()
            && layers.iter().zip(spec.widths.windows(2)).all(|(l, w)| {
                l.weight.shape() == [w[1], w[0]] && l.bias.shape() == [w[1]]
            });
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "layers do not match widths {:?}",
                spec.widths
            )));
        }
        Ok(Mlp { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    /// Places every parameter on the tape as `[w0, b0, w1, b1, ...]`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| l.bind(tape, trainable))
            .collect()
    }

    /// Linear/relu stack with no activation after the final layer.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let xv = tape.value(x);
        let (_, f) = xv.dims2()?;
        if f != self.spec.inputs() {
            return Err(Error::dim("mlp_forward", xv.shape(), &[self.spec.inputs()]));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, pair) in params.chunks_exact(2).enumerate() {
            h = linear(tape, h, pair[0], pair[1])?;
            if i < last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass without gradient tracking.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &params, xv)?;
        Ok(tape.value(out).clone())
    }
}

impl Module for Mlp {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layers.{i}.weight"), &l.weight),
                    (format!("layers.{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
