//! Stratified train/validation/test partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train,
            validation,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 80/10/10.
    pub fn scorer_default(seed: u64) -> Self {
        SplitSpec {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
            seed,
        }
    }

    /// 80/20 with no validation part.
    pub fn train_test(seed: u64) -> Self {
        SplitSpec {
            train: 0.8,
            validation: 0.0,
            test: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || self.train <= 0.0 {
            return Err(Error::InvalidArgument("split fractions must lie in [0, 1] with a nonempty train part".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Row indices of each part, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitParts {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits each class separately. A class of size `n` contributes
/// `round(f * n)` rows to each held-out part with fraction `f > 0`, raised to
/// one when the class has at least three rows so that every part sees every
/// class. The train part keeps the remainder and is never emptied.
pub fn stratified_split(labels: &[bool], spec: &SplitSpec) -> Result<SplitParts> {
    spec.validate()?;
    let mut parts = SplitParts::default();
    for (class_idx, class) in [false, true].into_iter().enumerate() {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n = rows.len();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, class_idx as u64)));

        let held = |f: f64| -> usize {
            if f <= 0.0 {
                return 0;
            }
            let k = (f * n as f64).round() as usize;
            if n >= 3 {
                k.max(1)
            } else {
                k
            }
        };
        let mut n_val = held(spec.validation);
        let mut n_test = held(spec.test);
        while n > 0 && n_val + n_test >= n {
            if n_val >= n_test && n_val > 0 {
                n_val -= 1;
            } else if n_test > 0 {
                n_test -= 1;
            } else {
                break;
            }
        }
        parts.validation.extend_from_slice(&rows[..n_val]);
        parts.test.extend_from_slice(&rows[n_val..n_val + n_test]);
        parts.train.extend_from_slice(&rows[n_val + n_test..]);
    }
    parts.train.sort_unstable();
    parts.validation.sort_unstable();
    parts.test.sort_unstable();
    Ok(parts)
}
