use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::{mix, shuffle};

/// Train/validation/test partition of sample ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    /// Sizes `(train, val, test)` for `n` samples: test = round(n/5), then a
    /// tenth of the remainder (floored) for validation, the rest for training.
    pub fn sizes(n: usize) -> (usize, usize, usize) {
        let test = ((2 * n + 5) / 10).max(1);
        let val = ((n - test) / 10).max(1);
        (n - test - val, val, test)
    }
}

pub fn split_dataset(ids: &[String], seed: u64) -> Result<SplitAssignment> {
    let n = ids.len();
    if n < 10 {
        return Err(Error::invalid(format!(
            "{n} samples cannot populate train/val/test splits (need at least 10)"
        )));
    }
    let (_, val, test) = SplitAssignment::sizes(n);
    let mut order: Vec<String> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7370_6c69));
    shuffle(&mut order, &mut rng);
    let test_ids = order[..test].to_vec();
    let val_ids = order[test..test + val].to_vec();
    let train_ids = order[test + val..].to_vec();
    Ok(SplitAssignment {
        seed,
        train: train_ids,
        val: val_ids,
        test: test_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn hundred() {
        let s = split_dataset(&ids(100), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (72, 8, 20));
    }

    #[test]
    fn full_size_counts() {
        assert_eq!(SplitAssignment::sizes(21_113), (15_201, 1_689, 4_223));
    }

    #[test]
    fn deterministic() {
        assert_eq!(split_dataset(&ids(50), 9).unwrap(), split_dataset(&ids(50), 9).unwrap());
        assert_ne!(
            split_dataset(&ids(50), 9).unwrap(),
            split_dataset(&ids(50), 10).unwrap()
        );
    }

    #[test]
    fn too_small_rejected() {
        assert!(split_dataset(&ids(9), 0).is_err());
        let s = split_dataset(&ids(10), 0).unwrap();
        assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
    }

    #[test]
    fn disjoint_and_exhaustive() {
        for n in 10..200 {
            let s = split_dataset(&ids(n), n as u64).unwrap();
            let all: HashSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
            assert_eq!(all.len(), n);
            assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
        }
    }
}
