//! Class-balanced batch sampling without replacement.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::NnError;

/// Emits batches containing an equal quota of every class, shuffled anew
/// each epoch from a seeded stream. Within an epoch samples are drawn
/// without replacement; once the smallest class is exhausted the epoch
/// ends and the leftover majority samples are dropped.
pub struct BalancedBatchSampler {
    class_indices: Vec<Vec<usize>>,
    pub batch_size: usize,
    pub quota: usize,
    rng: ChaCha8Rng,
}

impl BalancedBatchSampler {
    pub fn new(labels: &[usize], batch_size: usize, seed: u64) -> Result<Self, NnError> {
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        if n_classes == 0 || batch_size == 0 || batch_size % n_classes != 0 {
            return Err(NnError::BatchNotDivisible {
                batch: batch_size,
                classes: n_classes,
            });
        }
        let quota = batch_size / n_classes;
        let mut class_indices = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            class_indices[l].push(i);
        }
        for (class, idx) in class_indices.iter().enumerate() {
            if idx.len() < quota {
                return Err(NnError::ClassTooSmall {
                    class,
                    have: idx.len(),
                    need: quota,
                });
            }
        }
        Ok(BalancedBatchSampler {
            class_indices,
            batch_size,
            quota,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_indices.len()
    }

    /// Batches per epoch: the smallest class count divided by the quota.
    pub fn batches_per_epoch(&self) -> usize {
        self.class_indices
            .iter()
            .map(|c| c.len() / self.quota)
            .min()
            .unwrap_or(0)
    }

    /// One epoch of balanced batches. Advances the shuffle stream, so
    /// consecutive epochs differ while the whole sequence replays
    /// identically for the same seed.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let mut shuffled: Vec<Vec<usize>> = self
            .class_indices
            .iter()
            .map(|c| {
                let mut v = c.clone();
                v.shuffle(&mut self.rng);
                v
            })
            .collect();
        let n_batches = self.batches_per_epoch();
        let mut batches = Vec::with_capacity(n_batches);
        for bi in 0..n_batches {
            let mut batch = Vec::with_capacity(self.batch_size);
            for class in &mut shuffled {
                batch.extend_from_slice(&class[bi * self.quota..(bi + 1) * self.quota]);
            }
            batch.shuffle(&mut self.rng);
            batches.push(batch);
        }
        batches
    }
}
