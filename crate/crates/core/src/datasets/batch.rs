use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::nn::Matrix;

/// Shuffled mini-batches over `0..n`. The order of epoch `e` depends only on
/// `(seed, e)`; the last batch of an epoch may be short.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    pos: usize,
    order: Vec<usize>,
}

pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let batch_size = batch_size.max(1);
        Self {
            n,
            batch_size,
            seed,
            epoch: 0,
            pos: 0,
            order: epoch_order(n, seed, 0),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn advance_epoch(&mut self) {
        self.epoch += 1;
        self.pos = 0;
        self.order = epoch_order(self.n, self.seed, self.epoch);
    }

    /// Next batch of the current epoch, or `None` once the epoch is
    /// exhausted (the following call starts the next epoch).
    pub fn next_indices(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.n {
            self.advance_epoch();
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.n);
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(out)
    }

    /// A full batch of `min(batch_size, n)` indices, continuing into the
    /// next epoch's order when the current one runs out. Empty only when
    /// `n == 0`.
    pub fn next_cycling(&mut self) -> Vec<usize> {
        let want = self.batch_size.min(self.n);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            if self.pos >= self.n {
                self.advance_epoch();
            }
            let end = (self.pos + want - out.len()).min(self.n);
            out.extend_from_slice(&self.order[self.pos..end]);
            self.pos = end;
        }
        out
    }

    /// Indices, features and labels of the next batch of `data`.
    pub fn next_batch(&mut self, data: &LabeledDataset) -> Option<(Vec<usize>, Matrix, Vec<usize>)> {
        let idx = self.next_indices()?;
        let x = data.features().gather_rows(&idx);
        let y = idx.iter().map(|&i| data.labels()[i]).collect();
        Some((idx, x, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch(it: &mut BatchIterator) -> Vec<Vec<usize>> {
        std::iter::from_fn(|| it.next_indices()).collect()
    }

    #[test]
    fn partition_sizes() {
        let mut it = BatchIterator::new(10, 4, 3);
        let sizes: Vec<usize> = epoch(&mut it).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn epoch_covers_every_index_once() {
        let mut it = BatchIterator::new(37, 5, 1);
        for _ in 0..3 {
            let mut all: Vec<usize> = epoch(&mut it).concat();
            all.sort_unstable();
            assert_eq!(all, (0..37).collect::<Vec<_>>());
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = BatchIterator::new(50, 7, 42);
        let mut b = BatchIterator::new(50, 7, 42);
        for _ in 0..30 {
            assert_eq!(a.next_cycling(), b.next_cycling());
        }
    }

    #[test]
    fn cycling_batches_are_full_and_continue_the_order() {
        let mut it = BatchIterator::new(10, 4, 3);
        let e0 = epoch_order(10, 3, 0);
        let e1 = epoch_order(10, 3, 1);
        let batches: Vec<Vec<usize>> = (0..3).map(|_| it.next_cycling()).collect();
        assert!(batches.iter().all(|b| b.len() == 4));
        assert_eq!(batches[2][..2], e0[8..]);
        assert_eq!(batches[2][2..], e1[..2]);
        assert_eq!(BatchIterator::new(3, 8, 0).next_cycling().len(), 3);
    }

    #[test]
    fn epochs_reshuffle() {
        assert_ne!(epoch_order(100, 5, 0), epoch_order(100, 5, 1));
        assert_eq!(epoch_order(100, 5, 1), epoch_order(100, 5, 1));
    }
}
