use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ordering::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffled partition into train/val/test. Sizes are `floor(n * r)`
/// for val and test with the remainder going to train.
pub fn split_dataset<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Split<T>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    let n = items.len();
    let n_val = (n as f64 * ratios[1] + 1e-9).floor() as usize;
    let n_test = (n as f64 * ratios[2] + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    for (count, ratio, name) in [(n_train, ratios[0], "train split"), (n_val, ratios[1], "val split"), (n_test, ratios[2], "test split")] {
        if count == 0 && ratio > 0.0 {
            return Err(Error::EmptyInput(name));
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let take = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        train: take(&idx[..n_train]),
        val: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_partition() {
        let items: Vec<usize> = (0..100).collect();
        let s = split_dataset(&items, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        assert_eq!(s, split_dataset(&items, [0.8, 0.1, 0.1], 3).unwrap());
        assert_ne!(s.train, split_dataset(&items, [0.8, 0.1, 0.1], 4).unwrap().train);
    }

    #[test]
    fn rejects_bad_ratios_and_empty_splits() {
        let items = [1, 2, 3];
        assert!(split_dataset(&items, [0.5, 0.1, 0.1], 0).is_err());
        assert!(matches!(split_dataset(&items, [0.8, 0.1, 0.1], 0), Err(Error::EmptyInput(_))));
    }
}
