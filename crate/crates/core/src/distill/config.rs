use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training objective for the student.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Cross-entropy only.
    #[serde(rename = "none")]
    None,
    /// Vanilla distillation against the raw teacher logits.
    #[serde(rename = "kd")]
    Kd,
    /// Distillation against teacher logits corrected by a batch self-attention simplifier.
    #[serde(rename = "skd-attn")]
    SkdAttn,
    /// Same, with a single linear layer as the simplifier.
    #[serde(rename = "skd-fc1")]
    SkdFc1,
    /// Same, with a two-layer perceptron as the simplifier.
    #[serde(rename = "skd-fc2")]
    SkdFc2,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::None,
        Method::Kd,
        Method::SkdAttn,
        Method::SkdFc1,
        Method::SkdFc2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Kd => "kd",
            Method::SkdAttn => "skd-attn",
            Method::SkdFc1 => "skd-fc1",
            Method::SkdFc2 => "skd-fc2",
        }
    }

    pub fn uses_simplifier(self) -> bool {
        matches!(self, Method::SkdAttn | Method::SkdFc1 | Method::SkdFc2)
    }

    pub fn uses_teacher(self) -> bool {
        self != Method::None
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    /// Temperature of the softmax inside the distillation KL.
    #[serde(default = "default_temperature")]
    pub t_distill: f64,
    /// Weight of the simplified-distillation loss (skd methods) or of the
    /// cross-entropy term (kd).
    #[serde(default = "default_weight")]
    pub alpha: f64,
    /// Weight of the KL term for vanilla kd.
    #[serde(default = "default_weight")]
    pub beta: f64,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "default_true")]
    pub t_squared_scaling: bool,
    pub method: Method,
}

fn default_temperature() -> f64 {
    4.0
}
fn default_weight() -> f64 {
    1.0
}
fn default_warmup() -> usize {
    20
}
fn default_true() -> bool {
    true
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            t_distill: default_temperature(),
            alpha: default_weight(),
            beta: default_weight(),
            warmup_epochs: default_warmup(),
            t_squared_scaling: true,
            method: Method::SkdAttn,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_distill > 0.0 && self.t_distill.is_finite()) {
            return Err(Error::InvalidTemperature(self.t_distill));
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative real, got {w}")));
            }
        }
        Ok(())
    }

    /// Multiplier on the KL term: `T²` when scaling is on, else 1.
    pub fn kl_scale(&self) -> f64 {
        if self.t_squared_scaling {
            self.t_distill * self.t_distill
        } else {
            1.0
        }
    }
}

/// Temperature-scaled log-softmax applied to teacher logits before the simplifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SofteningConfig {
    pub enabled: bool,
    #[serde(default = "default_temperature")]
    pub t_soften: f64,
}

impl Default for SofteningConfig {
    fn default() -> Self {
        SofteningConfig {
            enabled: true,
            t_soften: default_temperature(),
        }
    }
}

impl SofteningConfig {
    pub fn disabled() -> Self {
        SofteningConfig {
            enabled: false,
            t_soften: default_temperature(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_soften > 0.0 && self.t_soften.is_finite()) {
            return Err(Error::InvalidTemperature(self.t_soften));
        }
        Ok(())
    }
}

/// Shape of the learning simplifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplifierConfig {
    /// Width of queries, keys and values.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_dim() -> usize {
    512
}
fn default_dropout() -> f64 {
    0.5
}

impl Default for SimplifierConfig {
    fn default() -> Self {
        SimplifierConfig {
            dim: default_dim(),
            dropout: default_dropout(),
        }
    }
}

impl SimplifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("simplifier dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        Ok(())
    }
}

/// Linear ramp `min(1, (epoch + 1) / warmup)` on the distillation weight.
pub fn warmup_weight(epoch: usize, warmup_epochs: usize) -> f64 {
    if warmup_epochs == 0 {
        1.0
    } else {
        ((epoch + 1) as f64 / warmup_epochs as f64).min(1.0)
    }
}
