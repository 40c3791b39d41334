use serde::{Deserialize, Serialize};

use super::DataError;
use crate::models::SequenceMode;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// `n_sequences` windows of `seq_len` steps with `n_features` values per step.
///
/// Values are stored sequence-major: `values[(t * seq_len + s) * n_features + j]`.
/// Targets, when present, are `n_sequences x 1` (many-to-one) or
/// `n_sequences x seq_len` (many-to-many).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceBatch<T> {
    n_sequences: usize,
    seq_len: usize,
    n_features: usize,
    values: Vec<T>,
    targets: Option<Tensor2<T>>,
}

impl<T: Scalar> SequenceBatch<T> {
    pub fn new(
        n_sequences: usize,
        seq_len: usize,
        n_features: usize,
        values: Vec<T>,
        targets: Option<Tensor2<T>>,
    ) -> Result<Self, DataError> {
        if values.len() != n_sequences * seq_len * n_features {
            return Err(DataError::Shape(format!(
                "{} values cannot form {n_sequences} sequences of {seq_len}x{n_features}",
                values.len()
            )));
        }
        if let Some(t) = &targets {
            if t.rows() != n_sequences || (t.cols() != 1 && t.cols() != seq_len) {
                return Err(DataError::Shape(format!(
                    "targets are {}x{}, expected {n_sequences}x1 or {n_sequences}x{seq_len}",
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(Self {
            n_sequences,
            seq_len,
            n_features,
            values,
            targets,
        })
    }

    /// Stacks `seq_len x n_features` matrices into a batch.
    pub fn from_sequences(sequences: &[Tensor2<T>], targets: Option<Tensor2<T>>) -> Result<Self, DataError> {
        let (seq_len, n_features) = sequences.first().map_or((0, 0), Tensor2::shape);
        let mut values = Vec::with_capacity(sequences.len() * seq_len * n_features);
        for s in sequences {
            if s.shape() != (seq_len, n_features) {
                return Err(DataError::Shape("sequences differ in shape".into()));
            }
            values.extend_from_slice(s.as_slice());
        }
        Self::new(sequences.len(), seq_len, n_features, values, targets)
    }

    pub fn n_sequences(&self) -> usize {
        self.n_sequences
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn targets(&self) -> Option<&Tensor2<T>> {
        self.targets.as_ref()
    }

    #[inline]
    pub fn get(&self, sequence: usize, step: usize, feature: usize) -> T {
        self.values[(sequence * self.seq_len + step) * self.n_features + feature]
    }

    pub fn set(&mut self, sequence: usize, step: usize, feature: usize, value: T) {
        self.values[(sequence * self.seq_len + step) * self.n_features + feature] = value;
    }

    /// All sequences at one step, as an `n_sequences x n_features` matrix.
    pub fn step(&self, step: usize) -> Tensor2<T> {
        let mut out = Tensor2::zeros(self.n_sequences, self.n_features);
        for t in 0..self.n_sequences {
            let start = (t * self.seq_len + step) * self.n_features;
            out.row_mut(t)
                .copy_from_slice(&self.values[start..start + self.n_features]);
        }
        out
    }

    /// One sequence as a `seq_len x n_features` matrix.
    pub fn sequence(&self, index: usize) -> Tensor2<T> {
        let width = self.seq_len * self.n_features;
        Tensor2::new(
            self.seq_len,
            self.n_features,
            self.values[index * width..(index + 1) * width].to_vec(),
        )
        .expect("sized slice")
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let width = self.seq_len * self.n_features;
        let mut values = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            values.extend_from_slice(&self.values[i * width..(i + 1) * width]);
        }
        Self {
            n_sequences: indices.len(),
            seq_len: self.seq_len,
            n_features: self.n_features,
            values,
            targets: self.targets.as_ref().map(|t| t.select_rows(indices)),
        }
    }

    pub fn cast<U: Scalar>(&self) -> SequenceBatch<U> {
        SequenceBatch {
            n_sequences: self.n_sequences,
            seq_len: self.seq_len,
            n_features: self.n_features,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            targets: self.targets.as_ref().map(Tensor2::cast),
        }
    }

    /// Overlapping windows over a time-major `features` matrix with a
    /// separate per-row target series.
    pub fn from_series(
        features: &Tensor2<T>,
        targets: &[T],
        seq_len: usize,
        mode: SequenceMode,
    ) -> Result<Self, DataError> {
        if seq_len == 0 {
            return Err(DataError::Shape("window length must be at least 1".into()));
        }
        if targets.len() != features.rows() {
            return Err(DataError::Shape(format!(
                "{} target values for {} rows",
                targets.len(),
                features.rows()
            )));
        }
        if features.rows() < seq_len {
            return Err(DataError::SeriesTooShort {
                rows: features.rows(),
                seq_len,
            });
        }
        let count = features.rows() - seq_len + 1;
        let p = features.cols();
        let mut values = Vec::with_capacity(count * seq_len * p);
        let target_cols = match mode {
            SequenceMode::ManyToOne => 1,
            SequenceMode::ManyToMany => seq_len,
        };
        let mut target_values = Vec::with_capacity(count * target_cols);
        for start in 0..count {
            for s in 0..seq_len {
                values.extend_from_slice(features.row(start + s));
            }
            match mode {
                SequenceMode::ManyToOne => target_values.push(targets[start + seq_len - 1]),
                SequenceMode::ManyToMany => target_values.extend_from_slice(&targets[start..start + seq_len]),
            }
        }
        let targets = Tensor2::new(count, target_cols, target_values).expect("sized buffer");
        Self::new(count, seq_len, p, values, Some(targets))
    }
}

/// Cuts a time-major series into overlapping windows of length `seq_len`.
///
/// Every column is an input feature; `target_column` also supplies the
/// targets (the value at the window end, or at every step for many-to-many).
pub fn windowize<T: Scalar>(
    series: &Tensor2<T>,
    seq_len: usize,
    target_column: usize,
    mode: SequenceMode,
) -> Result<SequenceBatch<T>, DataError> {
    if target_column >= series.cols() {
        return Err(DataError::Shape(format!(
            "target column {target_column} out of range for {} columns",
            series.cols()
        )));
    }
    SequenceBatch::from_series(series, &series.column(target_column), seq_len, mode)
}
