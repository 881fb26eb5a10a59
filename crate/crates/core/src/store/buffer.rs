//! Shuffled activation buffer feeding SAE training.
//!
//! Tokens are pulled from an ordered stream into a buffer of at most
//! `capacity` items. Each batch draws `batch_size` items uniformly without
//! replacement from the buffer. The buffer is topped back up to `capacity`
//! whenever it falls below half capacity (or below one batch), so every
//! input item is emitted exactly once and the final batch may be short.
//!
//! The draw sequence comes from ChaCha8 seeded with `seed`, so emission order
//! is a function of (input order, capacity, batch_size, seed) only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub struct ShuffledBatches<I: Iterator> {
    source: I,
    exhausted: bool,
    buffer: Vec<I::Item>,
    capacity: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<I: Iterator> ShuffledBatches<I> {
    pub fn new(source: I, capacity: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if capacity < batch_size {
            return Err(Error::config(format!("buffer capacity {capacity} is smaller than batch size {batch_size}")));
        }
        Ok(Self {
            source,
            exhausted: false,
            buffer: Vec::with_capacity(capacity),
            capacity,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn refill(&mut self) {
        while !self.exhausted && self.buffer.len() < self.capacity {
            match self.source.next() {
                Some(item) => self.buffer.push(item),
                None => self.exhausted = true,
            }
        }
    }
}

impl<I: Iterator> Iterator for ShuffledBatches<I> {
    type Item = Vec<I::Item>;

    fn next(&mut self) -> Option<Self::Item> {
        let len = self.buffer.len();
        if 2 * len < self.capacity || len < self.batch_size {
            self.refill();
        }
        if self.buffer.is_empty() {
            return None;
        }
        let take = self.batch_size.min(self.buffer.len());
        let mut batch = Vec::with_capacity(take);
        for _ in 0..take {
            let j = self.rng.random_range(0..self.buffer.len());
            batch.push(self.buffer.swap_remove(j));
        }
        Some(batch)
    }
}

/// Convenience wrapper over [`ShuffledBatches::new`].
pub fn shuffled_batches<I: IntoIterator>(
    source: I,
    capacity: usize,
    batch_size: usize,
    seed: u64,
) -> Result<ShuffledBatches<I::IntoIter>> {
    ShuffledBatches::new(source.into_iter(), capacity, batch_size, seed)
}
