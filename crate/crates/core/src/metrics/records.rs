use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// End-of-epoch measurements. Agreements are student vs teacher.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_top1: f64,
    pub train_top5: f64,
    pub val_top1: f64,
    pub val_top5: f64,
    /// Mean over the epoch's batches.
    pub ce: f64,
    /// Mean scaled distillation term; 0 without a teacher.
    pub distill: f64,
    pub train_agreement: Option<f64>,
    pub val_agreement: Option<f64>,
    /// Probabilities clamped inside logarithms during the epoch.
    pub clamps: usize,
    /// Median wall-clock per training batch.
    pub ms_per_batch: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    pub fn push(&mut self, m: EpochMetrics) -> Result<()> {
        if m.epoch != self.epochs.len() {
            return Err(Error::Config(format!(
                "epoch {} recorded after {} epochs",
                m.epoch,
                self.epochs.len()
            )));
        }
        self.epochs.push(m);
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> RunMetrics {
        RunMetrics {
            epochs: self
                .epochs
                .iter()
                .map(|e| EpochMetrics { ms_per_batch: 0.0, ..*e })
                .collect(),
        }
    }
}
