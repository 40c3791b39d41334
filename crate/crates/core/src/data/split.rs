use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Split};

/// Shares of rows assigned to each split; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    #[serde(default)]
    pub validation: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn train_test(train: f64) -> Self {
        Self {
            train,
            validation: 0.0,
            test: 1.0 - train,
        }
    }

    /// Row counts for `n` rows: train and validation are rounded, test takes the rest.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize), DataError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::BadFractions(parts.to_vec()));
        }
        let train = (self.train * n as f64).round() as usize;
        let validation = (self.validation * n as f64).round() as usize;
        let test = n
            .checked_sub(train + validation)
            .ok_or_else(|| DataError::BadFractions(parts.to_vec()))?;
        for (name, share, count) in [
            ("train", self.train, train),
            ("validation", self.validation, validation),
            ("test", self.test, test),
        ] {
            if share > 0.0 && count == 0 {
                return Err(DataError::EmptySplit { name, rows: n });
            }
        }
        Ok((train, validation, test))
    }
}

/// Seeded shuffle, then the first rows go to train, the next to validation
/// and the remainder to test.
pub fn split(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Dataset, DataError> {
    let n = dataset.n_rows();
    let (train, validation, _) = fractions.counts(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![Split::Test; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = if pos < train {
            Split::Train
        } else if pos < train + validation {
            Split::Validation
        } else {
            Split::Test
        };
    }
    let mut out = dataset.clone();
    out.split = assignment;
    Ok(out)
}
