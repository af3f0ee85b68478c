use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::manifest::Split;
use crate::error::{Error, Result};

/// How to size the train/validation/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSizes {
    /// Validation and test get `floor(fraction * N)`; train gets the rest.
    Fractions { val: f64, test: f64 },
    /// Exact counts; must sum to N.
    Counts {
        train: usize,
        val: usize,
        test: usize,
    },
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes::Fractions {
            val: 0.10,
            test: 0.20,
        }
    }
}

impl SplitSizes {
    /// Resolves to `(train, val, test)` counts for `n` ids.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        match *self {
            SplitSizes::Fractions { val, test } => {
                if !(val >= 0.0 && test >= 0.0 && val + test < 1.0) {
                    return Err(Error::Config(format!(
                        "invalid split fractions val={val} test={test}"
                    )));
                }
                let v = (val * n as f64).floor() as usize;
                let t = (test * n as f64).floor() as usize;
                Ok((n - v - t, v, t))
            }
            SplitSizes::Counts { train, val, test } => {
                if train + val + test != n {
                    return Err(Error::Config(format!(
                        "split counts {train}+{val}+{test} do not sum to {n} ids"
                    )));
                }
                Ok((train, val, test))
            }
        }
    }
}

/// Assigns each id (by position) to a split after a seeded shuffle.
pub fn make_splits(ids: &[String], seed: u64, sizes: SplitSizes) -> Result<Vec<Split>> {
    if ids.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 ids to split, got {}",
            ids.len()
        )));
    }
    let (train, val, _) = sizes.counts(ids.len())?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Test; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    fn count(s: &[Split], which: Split) -> usize {
        s.iter().filter(|&&x| x == which).count()
    }

    #[test]
    fn ten_ids() {
        let s = make_splits(&ids(10), 1, SplitSizes::default()).unwrap();
        assert_eq!(
            (
                count(&s, Split::Train),
                count(&s, Split::Val),
                count(&s, Split::Test)
            ),
            (7, 1, 2)
        );
    }

    #[test]
    fn explicit_counts_reproduce_published_sizes() {
        let sizes = SplitSizes::Counts {
            train: 3449,
            val: 491,
            test: 987,
        };
        let s = make_splits(&ids(4927), 0, sizes).unwrap();
        assert_eq!(count(&s, Split::Train), 3449);
        assert_eq!(count(&s, Split::Val), 491);
        assert_eq!(count(&s, Split::Test), 987);
    }

    #[test]
    fn deterministic_and_too_few() {
        let a = make_splits(&ids(50), 9, SplitSizes::default()).unwrap();
        assert_eq!(a, make_splits(&ids(50), 9, SplitSizes::default()).unwrap());
        assert_ne!(a, make_splits(&ids(50), 10, SplitSizes::default()).unwrap());
        assert!(make_splits(&ids(2), 0, SplitSizes::default()).is_err());
    }

    proptest! {
        #[test]
        fn sizes_follow_floor_rule(n in 3usize..500, seed in any::<u64>()) {
            let s = make_splits(&ids(n), seed, SplitSizes::default()).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert_eq!(count(&s, Split::Val), (0.1 * n as f64).floor() as usize);
            prop_assert_eq!(count(&s, Split::Test), (0.2 * n as f64).floor() as usize);
        }
    }
}
