//! Learning simplifiers: trainable maps from softened teacher logits to a
//! logit correction Δ.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Method, SimplifierConfig, SofteningConfig};
use super::loss::soften;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{linear, LinearLayer, Module};
use crate::seeds;

/// Single-head self-attention across the batch axis.
///
/// `proj_in` maps K classes to `[Q | K | V]` (3·dim wide); `proj_out` maps
/// `A·V` back to K classes and starts at zero so Δ = 0 before training.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionSimplifier {
    pub proj_in: LinearLayer,
    pub proj_out: LinearLayer,
    pub dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

/// Row-wise perceptron simplifier (1 or 2 layers, relu between).
#[derive(Clone, Debug, PartialEq)]
pub struct FcSimplifier {
    pub layers: Vec<LinearLayer>,
    pub dropout: f64,
    pub seed: u64,
}

/// Tape handles produced by a simplifier forward pass.
#[derive(Clone, Copy, Debug)]
pub struct SimplifierTrace {
    pub delta: Var,
    /// Batch attention matrix (attention simplifier only).
    pub attention: Option<Var>,
}

impl AttentionSimplifier {
    pub fn new(classes: usize, cfg: &SimplifierConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(AttentionSimplifier {
            proj_in: LinearLayer::he(classes, 3 * cfg.dim, &mut rng),
            proj_out: LinearLayer::zeros(cfg.dim, classes),
            dim: cfg.dim,
            dropout: cfg.dropout,
            seed,
        })
    }

    pub fn classes(&self) -> usize {
        self.proj_in.inputs()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim;
        let k = self.classes();
        if self.proj_in.outputs() != 3 * d || self.proj_out.inputs() != d || self.proj_out.outputs() != k {
            return Err(Error::ShapeMismatch(format!(
                "attention simplifier with dim {d}: proj_in {:?}, proj_out {:?}",
                self.proj_in.weight.shape(),
                self.proj_out.weight.shape()
            )));
        }
        Ok(())
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        g_soft: Var,
        training: bool,
        dropout_seed: u64,
    ) -> Result<SimplifierTrace> {
        let d = self.dim;
        let qkv = linear(tape, g_soft, params[0], params[1])?;
        let q = tape.slice_cols(qkv, 0, d)?;
        let k = tape.slice_cols(qkv, d, d)?;
        let v = tape.slice_cols(qkv, 2 * d, d)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        // softmax(QKᵀ/√D) is a softmax at temperature √D
        let attention = tape.softmax_t(scores, (d as f64).sqrt())?;
        let mixed = tape.matmul(attention, v)?;
        let out = linear(tape, mixed, params[2], params[3])?;
        let delta = tape.dropout(out, self.dropout, dropout_seed, training)?;
        Ok(SimplifierTrace {
            delta,
            attention: Some(attention),
        })
    }
}

impl FcSimplifier {
    pub fn new(classes: usize, depth: usize, dropout: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidRate(dropout));
        }
        let layers = match depth {
            1 => vec![LinearLayer::zeros(classes, classes)],
            2 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                vec![
                    LinearLayer::he(classes, classes, &mut rng),
                    LinearLayer::zeros(classes, classes),
                ]
            }
            _ => {
                return Err(Error::Config(format!(
                    "fc simplifier depth must be 1 or 2, got {depth}"
                )))
            }
        };
        Ok(FcSimplifier {
            layers,
            dropout,
            seed,
        })
    }

    pub fn classes(&self) -> usize {
        self.layers[0].inputs()
    }

    fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        g_soft: Var,
        training: bool,
        dropout_seed: u64,
    ) -> Result<SimplifierTrace> {
        let mut h = g_soft;
        for (i, pair) in params.chunks_exact(2).enumerate() {
            if i > 0 {
                h = tape.relu(h)?;
            }
            h = linear(tape, h, pair[0], pair[1])?;
        }
        let delta = tape.dropout(h, self.dropout, dropout_seed, training)?;
        Ok(SimplifierTrace {
            delta,
            attention: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Simplifier {
    Attention(AttentionSimplifier),
    Fc(FcSimplifier),
}

impl Simplifier {
    /// Builds the simplifier a method calls for; `None` for methods without one.
    pub fn for_method(
        method: Method,
        classes: usize,
        cfg: &SimplifierConfig,
        seed: u64,
    ) -> Result<Option<Self>> {
        Ok(match method {
            Method::None | Method::Kd => None,
            Method::SkdAttn => Some(Simplifier::Attention(AttentionSimplifier::new(
                classes, cfg, seed,
            )?)),
            Method::SkdFc1 => Some(Simplifier::Fc(FcSimplifier::new(classes, 1, cfg.dropout, seed)?)),
            Method::SkdFc2 => Some(Simplifier::Fc(FcSimplifier::new(classes, 2, cfg.dropout, seed)?)),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Simplifier::Attention(_) => Method::SkdAttn,
            Simplifier::Fc(fc) if fc.layers.len() == 1 => Method::SkdFc1,
            Simplifier::Fc(_) => Method::SkdFc2,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Simplifier::Attention(a) => a.classes(),
            Simplifier::Fc(f) => f.classes(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Simplifier::Attention(a) => a.seed,
            Simplifier::Fc(f) => f.seed,
        }
    }

    pub fn dropout(&self) -> f64 {
        match self {
            Simplifier::Attention(a) => a.dropout,
            Simplifier::Fc(f) => f.dropout,
        }
    }

    pub fn layers(&self) -> Vec<&LinearLayer> {
        match self {
            Simplifier::Attention(a) => vec![&a.proj_in, &a.proj_out],
            Simplifier::Fc(f) => f.layers.iter().collect(),
        }
    }

    fn layers_mut(&mut self) -> Vec<&mut LinearLayer> {
        match self {
            Simplifier::Attention(a) => vec![&mut a.proj_in, &mut a.proj_out],
            Simplifier::Fc(f) => f.layers.iter_mut().collect(),
        }
    }

    /// Checks internal shape consistency (used after loading).
    pub fn validate(&self) -> Result<()> {
        match self {
            Simplifier::Attention(a) => a.validate(),
            Simplifier::Fc(f) => {
                let k = f.classes();
                if f.layers.is_empty()
                    || f.layers.len() > 2
                    || f.layers.iter().any(|l| l.inputs() != k || l.outputs() != k)
                {
                    return Err(Error::ShapeMismatch(
                        "fc simplifier layers must all be K×K".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Dropout seed for a given training step.
    pub fn step_seed(&self, step: u64) -> u64 {
        seeds::derive(self.seed(), step)
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.layers()
            .into_iter()
            .flat_map(|l| l.bind(tape, trainable))
            .collect()
    }

    /// Computes Δ from the softened teacher logits `g_soft`.
    ///
    /// `g_soft` should be a constant on the tape: gradients flow into the
    /// simplifier parameters only.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        g_soft: Var,
        training: bool,
        dropout_seed: u64,
    ) -> Result<SimplifierTrace> {
        let gv = tape.value(g_soft);
        let (b, k) = gv.dims2()?;
        if k != self.classes() {
            return Err(Error::dim("simplifier", gv.shape(), &[b, self.classes()]));
        }
        match self {
            Simplifier::Attention(a) => a.forward(tape, params, g_soft, training, dropout_seed),
            Simplifier::Fc(f) => f.forward(tape, params, g_soft, training, dropout_seed),
        }
    }

    /// Eval-mode Δ for a batch of softened teacher logits.
    pub fn delta(&self, g_soft: &Tensor) -> Result<Tensor> {
        Ok(self.eval(g_soft)?.0)
    }

    /// Eval-mode batch attention matrix, if this is an attention simplifier.
    pub fn attention_matrix(&self, g_soft: &Tensor) -> Result<Option<Tensor>> {
        Ok(self.eval(g_soft)?.1)
    }

    fn eval(&self, g_soft: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let x = tape.constant(g_soft.clone());
        let trace = self.forward(&mut tape, &params, x, false, 0)?;
        Ok((
            tape.value(trace.delta).clone(),
            trace.attention.map(|a| tape.value(a).clone()),
        ))
    }

    /// Eval-mode simplified teacher logits `soften(g_t) + Δ`.
    ///
    /// Other distillation losses can consume these in place of raw teacher
    /// logits.
    pub fn skd_logits(&self, g_t: &Tensor, softening: &SofteningConfig) -> Result<Tensor> {
        let g_soft = soften(g_t, softening)?;
        let delta = self.delta(&g_soft)?;
        let data = g_soft
            .data()
            .iter()
            .zip(delta.data())
            .map(|(s, d)| d + s)
            .collect();
        Tensor::new(g_soft.shape().to_vec(), data)
    }
}

impl Module for Simplifier {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let names: &[&str] = match self {
            Simplifier::Attention(_) => &["proj_in", "proj_out"],
            Simplifier::Fc(_) => &["fc.0", "fc.1"],
        };
        self.layers()
            .into_iter()
            .zip(names)
            .flat_map(|(l, n)| {
                [
                    (format!("{n}.weight"), &l.weight),
                    (format!("{n}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
