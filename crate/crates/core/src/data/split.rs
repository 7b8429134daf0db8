//! Seeded train/test splits and mini-batch schedules.
//!
//! Batches carry original dataset row indices, so a teacher feature cache
//! (stored in dataset order) lines up with any student batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Deterministic shuffled split; the test side gets
    /// `round(n · test_fraction)` rows, at least one and never all.
    pub fn new(n: usize, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must be in (0, 1), got {test_fraction}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("cannot split {n} examples")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        let test = order.split_off(n - n_test);
        Ok(Self { train: order, test })
    }
}

/// One epoch of mini-batches over `indices`, shuffled by `(seed, epoch)`.
///
/// A trailing batch of a single row is folded into the previous batch so
/// every batch has at least two rows.
pub fn epoch_batches(indices: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::BatchTooSmall(batch_size));
    }
    if indices.len() < 2 {
        return Err(Error::BatchTooSmall(indices.len()));
    }
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    Ok(batches)
}

/// Split plus the first epoch's batch schedule.
pub fn split_and_batch(
    dataset: &Dataset,
    test_fraction: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(Split, Vec<Vec<usize>>)> {
    if batch_size < 2 {
        return Err(Error::BatchTooSmall(batch_size));
    }
    let split = Split::new(dataset.len(), test_fraction, seed)?;
    let batches = epoch_batches(&split.train, batch_size, seed, 0)?;
    Ok((split, batches))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use std::collections::BTreeSet;

    fn dataset(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Dataset::new(Matrix::column(&x), vec![0; n], 1, "d").unwrap()
    }

    #[test]
    fn half_split() {
        let (split, _) = split_and_batch(&dataset(10), 0.5, 2, 3).unwrap();
        assert_eq!(split.train.len(), 5);
        assert_eq!(split.test.len(), 5);
    }

    #[test]
    fn batches_partition_the_train_split() {
        let (split, batches) = split_and_batch(&dataset(23), 0.3, 4, 9).unwrap();
        let mut seen = BTreeSet::new();
        for b in &batches {
            assert!(b.len() >= 2);
            for &i in b {
                assert!(seen.insert(i), "index {i} in two batches");
            }
        }
        assert_eq!(seen, split.train.iter().copied().collect());
        let all: BTreeSet<usize> = split.train.iter().chain(&split.test).copied().collect();
        assert_eq!(all.len(), 23);
    }

    #[test]
    fn singleton_tail_is_folded() {
        let idx: Vec<usize> = (0..9).collect();
        let batches = epoch_batches(&idx, 4, 0, 0).unwrap();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn seeded_and_epoch_dependent() {
        let d = dataset(30);
        assert_eq!(
            split_and_batch(&d, 0.2, 4, 1).unwrap(),
            split_and_batch(&d, 0.2, 4, 1).unwrap()
        );
        let idx: Vec<usize> = (0..30).collect();
        assert_ne!(
            epoch_batches(&idx, 4, 1, 0).unwrap(),
            epoch_batches(&idx, 4, 1, 1).unwrap()
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = dataset(10);
        assert!(matches!(split_and_batch(&d, 0.5, 1, 0), Err(Error::BatchTooSmall(1))));
        assert!(split_and_batch(&d, 0.0, 4, 0).is_err());
        assert!(split_and_batch(&d, 1.0, 4, 0).is_err());
    }
}
