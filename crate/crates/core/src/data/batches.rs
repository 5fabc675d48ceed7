use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// A minibatch; `indices` point back into the source dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub superclasses: Vec<usize>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Endless shuffled minibatches. Epoch `e` uses a permutation seeded with
/// `seed ^ e`; the last batch of an epoch may be short.
#[derive(Clone, Debug)]
pub struct BatchIterator<'a> {
    data: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> BatchIterator<'a> {
    pub fn new(data: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        Self::starting_at(data, batch_size, seed, 0)
    }

    /// Positions the iterator at the start of `epoch`, as if resumed.
    pub fn starting_at(data: &'a Dataset, batch_size: usize, seed: u64, epoch: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(BatchIterator {
            data,
            batch_size,
            seed,
            epoch,
            order: permutation(data.len(), seed ^ epoch as u64),
            pos: 0,
        })
    }

    /// Epoch of the next batch.
    pub fn epoch(&self) -> usize {
        if self.pos >= self.order.len() {
            self.epoch + 1
        } else {
            self.epoch
        }
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.pos >= self.order.len() {
            self.epoch += 1;
            self.order = permutation(self.data.len(), self.seed ^ self.epoch as u64);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.data.batch(&self.order[self.pos..end]);
        self.pos = end;
        batch
    }

    /// The remaining batches of the current epoch.
    pub fn epoch_batches(&mut self) -> Vec<Batch> {
        let epoch = self.epoch();
        let mut out = Vec::new();
        while self.epoch() == epoch {
            out.push(self.next_batch());
        }
        out
    }
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn dataset(n: usize) -> Dataset {
        let x = Tensor::new(vec![n, 2], (0..2 * n).map(|v| v as f64).collect()).unwrap();
        Dataset::new(x, vec![0; n], vec![0; n], 1, Split::Train).unwrap()
    }

    #[test]
    fn short_final_batch() {
        let d = dataset(10);
        let mut it = BatchIterator::new(&d, 4, 1).unwrap();
        assert_eq!(it.batches_per_epoch(), 3);
        let sizes: Vec<usize> = it.epoch_batches().iter().map(Batch::len).collect();
        assert_eq!(sizes, [4, 4, 2]);
        assert_eq!(it.epoch(), 1);
    }

    #[test]
    fn rows_follow_indices() {
        let d = dataset(7);
        let mut it = BatchIterator::new(&d, 3, 9).unwrap();
        let b = it.next_batch();
        for (r, &i) in b.indices.iter().enumerate() {
            assert_eq!(b.features.row(r), d.features().row(i));
        }
    }

    #[test]
    fn resume_matches_continuous_run() {
        let d = dataset(9);
        let mut a = BatchIterator::new(&d, 4, 5).unwrap();
        a.epoch_batches();
        let mut b = BatchIterator::starting_at(&d, 4, 5, 1).unwrap();
        assert_eq!(a.epoch_batches(), b.epoch_batches());
    }

    #[test]
    fn rejects_empty_and_zero_batch() {
        let d = Dataset::new(Tensor::zeros(&[0, 2]), vec![], vec![], 1, Split::Val).unwrap();
        assert!(matches!(BatchIterator::new(&d, 4, 0), Err(Error::EmptyDataset)));
        assert!(BatchIterator::new(&dataset(3), 0, 0).is_err());
    }
}
