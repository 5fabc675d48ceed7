use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step decay: the rate is divided by `factor` at each listed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base: f64,
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_factor() -> f64 {
    10.0
}

impl LrSchedule {
    pub fn new(base: f64, decay_epochs: Vec<usize>, factor: f64) -> Result<Self> {
        let s = LrSchedule {
            base,
            decay_epochs,
            factor,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(base: f64) -> Self {
        LrSchedule {
            base,
            decay_epochs: Vec::new(),
            factor: default_factor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base >= 0.0 && self.base.is_finite()) {
            return Err(Error::Config(format!("base learning rate {} is invalid", self.base)));
        }
        if !(self.factor >= 1.0 && self.factor.is_finite()) {
            return Err(Error::Config(format!("decay factor {} must be >= 1", self.factor)));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "decay epochs {:?} must be strictly increasing",
                self.decay_epochs
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.base / self.factor.powi(decays as i32)
    }
}
