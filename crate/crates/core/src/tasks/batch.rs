use crate::error::{Error, Result};
use crate::rng::Stream;

/// Epoch-wise shuffled batches drawn without replacement.
///
/// Each epoch is a fresh permutation cut into `batch_size` chunks; the last
/// chunk holds the remainder. Without `recycle` the stream ends after one
/// epoch; with it, exhausted pools are reshuffled and restarted.
#[derive(Debug, Clone)]
pub struct BatchStream<T> {
    items: Vec<T>,
    batch_size: usize,
    recycle: bool,
    rng: Stream,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    batches_served: usize,
}

impl<T: Clone> BatchStream<T> {
    pub fn new(items: Vec<T>, batch_size: usize, seed: u64, recycle: bool) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("batch stream dataset".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let rng = Stream::new(seed, "batches");
        let mut stream = Self {
            order: Vec::new(),
            items,
            batch_size,
            recycle,
            rng,
            cursor: 0,
            epoch: 0,
            batches_served: 0,
        };
        stream.reshuffle();
        Ok(stream)
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.items.len()).collect();
        self.rng
            .derive_index("epoch", self.epoch as u64)
            .shuffle(&mut self.order);
        self.cursor = 0;
    }

    pub fn len_items(&self) -> usize {
        self.items.len()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.items.len().div_ceil(self.batch_size)
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_served(&self) -> usize {
        self.batches_served
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    /// Next batch; always `Some` when recycling.
    pub fn next_batch(&mut self) -> Option<Vec<T>> {
        if self.cursor >= self.order.len() {
            if !self.recycle {
                return None;
            }
            self.epoch += 1;
            self.reshuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end]
            .iter()
            .map(|&i| self.items[i].clone())
            .collect();
        self.cursor = end;
        if self.cursor >= self.order.len() && !self.recycle {
            self.epoch += 1;
        }
        self.batches_served += 1;
        Some(batch)
    }
}

impl<T: Clone> Iterator for BatchStream<T> {
    type Item = Vec<T>;

    fn next(&mut self) -> Option<Vec<T>> {
        self.next_batch()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn single_batch_epoch() {
        let mut s = BatchStream::new((0..10).collect::<Vec<u32>>(), 10, 1, false).unwrap();
        let b = s.next_batch().unwrap();
        assert_eq!(b.iter().copied().collect::<HashSet<_>>().len(), 10);
        assert!(s.next_batch().is_none());
    }

    #[test]
    fn oversampled_small_pool() {
        let mut s = BatchStream::new((0..45).collect::<Vec<u32>>(), 10, 2, true).unwrap();
        assert_eq!(s.batches_per_epoch(), 5);
        for _ in 0..4 {
            let window: Vec<Vec<u32>> = (0..5).map(|_| s.next_batch().unwrap()).collect();
            let sizes: Vec<usize> = window.iter().map(Vec::len).collect();
            assert_eq!(sizes, vec![10, 10, 10, 10, 5]);
            let seen: HashSet<u32> = window.into_iter().flatten().collect();
            assert_eq!(seen.len(), 45);
        }
        assert_eq!(s.epoch(), 3);
    }

    #[test]
    fn same_seed_same_sequence() {
        let a: Vec<_> = BatchStream::new((0..23).collect::<Vec<u32>>(), 4, 9, true)
            .unwrap()
            .take(20)
            .collect();
        let b: Vec<_> = BatchStream::new((0..23).collect::<Vec<u32>>(), 4, 9, true)
            .unwrap()
            .take(20)
            .collect();
        assert_eq!(a, b);
        let c: Vec<_> = BatchStream::new((0..23).collect::<Vec<u32>>(), 4, 10, true)
            .unwrap()
            .take(20)
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn epochs_are_reshuffled() {
        let mut s = BatchStream::new((0..30).collect::<Vec<u32>>(), 30, 3, true).unwrap();
        assert_ne!(s.next_batch(), s.next_batch());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(BatchStream::<u8>::new(Vec::new(), 3, 0, true).is_err());
        assert!(BatchStream::new(vec![1u8], 0, 0, true).is_err());
    }
}
