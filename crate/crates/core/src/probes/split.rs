use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Seeded shuffle; the first `floor(train_fraction * N)` rows train.
    Holdout { train_fraction: f64, seed: u64 },
    /// Train and evaluate on every row.
    InSample,
}

impl SplitSpec {
    pub fn holdout(seed: u64) -> Self {
        SplitSpec::Holdout {
            train_fraction: 0.8,
            seed,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            SplitSpec::Holdout { seed, .. } => Some(*seed),
            SplitSpec::InSample => None,
        }
    }
}

/// Returns sorted `(train, test)` row indices.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    match spec {
        SplitSpec::InSample => {
            if n == 0 {
                return Err(Error::EmptySplit("no rows".into()));
            }
            Ok(((0..n).collect(), (0..n).collect()))
        }
        SplitSpec::Holdout {
            train_fraction,
            seed,
        } => {
            if !(0.0..1.0).contains(&train_fraction) {
                return Err(Error::Config(format!(
                    "train_fraction {train_fraction} outside [0, 1)"
                )));
            }
            let n_train = (train_fraction * n as f64).floor() as usize;
            if n_train == 0 || n_train == n {
                return Err(Error::EmptySplit(format!(
                    "{n} rows give {n_train} train / {} test",
                    n - n_train
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut train = order[..n_train].to_vec();
            let mut test = order[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Ok((train, test))
        }
    }
}
