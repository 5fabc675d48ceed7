//! Datasets: the synthetic superclass generator, CSV I/O, and batch iteration.

mod batches;
mod csv_io;
mod synthetic;

pub use batches::{Batch, BatchIterator};
pub use csv_io::{load_csv, write_csv};
pub use synthetic::{generate_synthetic, Manifest, SyntheticSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Immutable labelled feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    superclasses: Vec<usize>,
    classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        superclasses: Vec<usize>,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if labels.len() != n || superclasses.len() != n {
            return Err(Error::dim(
                "dataset",
                features.shape(),
                &[labels.len(), superclasses.len()],
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::LabelRange {
                line: 0,
                label: bad as i64,
                classes,
            });
        }
        Ok(Dataset {
            features,
            labels,
            superclasses,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn superclasses(&self) -> &[usize] {
        &self.superclasses
    }

    /// Samples `indices`, in order.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            superclasses: indices.iter().map(|&i| self.superclasses[i]).collect(),
            indices: indices.to_vec(),
        }
    }

    /// Whole dataset as one batch.
    pub fn all(&self) -> Batch {
        Batch {
            features: self.features.clone(),
            labels: self.labels.clone(),
            superclasses: self.superclasses.clone(),
            indices: (0..self.len()).collect(),
        }
    }

    /// SHA-256 over shape, class count, labels, superclasses and feature bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in self.features.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        h.update((self.classes as u64).to_le_bytes());
        for &y in &self.labels {
            h.update((y as u64).to_le_bytes());
        }
        for &s in &self.superclasses {
            h.update((s as u64).to_le_bytes());
        }
        for v in self.features.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
