//! Train/validation/test partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Split seeds for the five repeated-partition conditions, in order.
pub const CONDITION_SEEDS: [u64; 5] = [1101, 2202, 3303, 4404, 5505];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn file_name(&self) -> String {
        format!("split_{}.json", self.seed)
    }
}

/// 80/10/10 partition of `0..n`, shuffled by `seed`.
pub fn split_dataset(n: usize, seed: u64) -> Result<DatasetSplit, DatasetError> {
    let tenth = (n as f64 * 0.1).round() as usize;
    split_with_counts(n, seed, tenth, tenth)
}

/// Shuffle `0..n` by `seed` and cut it into `n − val − test`, `val`, `test`.
pub fn split_with_counts(n: usize, seed: u64, val: usize, test: usize) -> Result<DatasetSplit, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    if val + test >= n {
        return Err(DatasetError::InvalidSpec(format!(
            "split of {n} samples leaves no training data ({val} val, {test} test)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_part = idx.split_off(n - test);
    let val_part = idx.split_off(n - test - val);
    Ok(DatasetSplit {
        seed,
        train: idx,
        val: val_part,
        test: test_part,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_sizes() {
        let s = split_dataset(5100, CONDITION_SEEDS[0]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (4080, 510, 510));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..5100).collect::<Vec<_>>());
    }

    #[test]
    fn proportions_within_rounding() {
        for n in [7, 10, 99, 1000, 1001, 1234] {
            let s = split_dataset(n, 3).unwrap();
            assert_eq!(s.len(), n);
            assert!((s.val.len() as f64 - 0.1 * n as f64).abs() <= 0.5);
            assert!((s.train.len() as f64 - 0.8 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        assert_eq!(split_dataset(500, 9).unwrap(), split_dataset(500, 9).unwrap());
        let a: HashSet<usize> = split_dataset(5100, CONDITION_SEEDS[0])
            .unwrap()
            .test
            .into_iter()
            .collect();
        let b: HashSet<usize> = split_dataset(5100, CONDITION_SEEDS[1])
            .unwrap()
            .test
            .into_iter()
            .collect();
        assert!(a.intersection(&b).count() < a.len());
    }

    #[test]
    fn surrogate_proportions() {
        let s = split_with_counts(5100, 1, 1019, 1019).unwrap();
        assert_eq!(s.train.len(), 3062);
    }

    #[test]
    fn errors() {
        assert!(split_dataset(0, 1).is_err());
        assert!(split_with_counts(10, 1, 5, 5).is_err());
    }
}
