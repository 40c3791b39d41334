use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    Column, ColumnKind, ColumnSpec, ColumnType, Dataset, Preprocessing, Schema, Split, TargetKind, TargetSpec,
};
use crate::tensor::Tensor2;
use crate::training::loss::Targets;

/// Noise standard deviation of the additive regression benchmark (variance 0.01).
pub const SYNTHETIC_NOISE_SD: f64 = 0.1;

const NAMES: [&str; 5] = ["X1", "X2", "X3", "X4", "X5"];

/// Schema of the files written from [`generate_synthetic`].
pub fn synthetic_schema() -> Schema {
    Schema {
        target: TargetSpec {
            name: "Y".into(),
            kind: TargetKind::Regression,
        },
        columns: NAMES
            .iter()
            .map(|n| ColumnSpec {
                name: n.to_string(),
                kind: ColumnType::Numeric,
            })
            .collect(),
    }
}

/// Draws `n` rows of `Y = cos X1 + sin X2 + 2 X3 + X4 + X5/100 + ε` with
/// independent standard normal features and `ε ~ N(0, noise_sd²)`.
///
/// Per row the generator draws X1..X5 and then ε, so the stream is fixed by `seed`.
pub fn generate_synthetic(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * 5);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let eps: f64 = rng.sample(StandardNormal);
        features.extend_from_slice(&x);
        target.push(x[0].cos() + x[1].sin() + 2.0 * x[2] + x[3] + 0.01 * x[4] + noise_sd * eps);
    }
    Dataset {
        features: Tensor2::new(n, 5, features).expect("5 per row"),
        targets: Targets::Regression(Tensor2::new(n, 1, target).expect("1 per row")),
        target_name: "Y".into(),
        columns: NAMES
            .iter()
            .enumerate()
            .map(|(j, name)| Column {
                name: name.to_string(),
                kind: ColumnKind::Numeric,
                group: j,
            })
            .collect(),
        groups: NAMES.iter().map(|s| s.to_string()).collect(),
        split: vec![Split::Train; n],
        preprocessing: Preprocessing::default(),
    }
}
