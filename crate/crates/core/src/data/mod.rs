//! Tabular datasets: CSV ingestion, one-hot encoding, standardization,
//! seeded splitting, sequence windowing and the synthetic regression generator.
//!
//! Preprocessing is always fitted on training rows only and recorded in
//! [`Preprocessing`] so it can be replayed on new data at inference time.

mod csv_io;
mod encode;
mod sequence;
mod split;
mod synthetic;

pub use csv_io::{load_csv, load_csv_reader, write_csv};
pub use encode::{one_hot_encode, standardize, CategoryMap, Preprocessing, Standardizer};
pub use sequence::{windowize, SequenceBatch};
pub use split::{split, SplitFractions};
pub use synthetic::{generate_synthetic, synthetic_schema, SYNTHETIC_NOISE_SD};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor2;
use crate::training::loss::Targets;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("file has no data rows")]
    EmptyFile,
    #[error("column `{0}` named in the schema is missing from the header")]
    MissingColumn(String),
    #[error("row {row} (line {line}), column `{column}`: cannot parse `{value}` as {expected}")]
    Parse {
        row: usize,
        line: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("split fractions must be non-negative and sum to 1 (got {0:?})")]
    BadFractions(Vec<f64>),
    #[error("{name} split would be empty with {rows} rows")]
    EmptySplit { name: &'static str, rows: usize },
    #[error("series has {rows} rows, fewer than the window length {seq_len}")]
    SeriesTooShort { rows: usize, seq_len: usize },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Non-negative integer class labels.
    Class,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub kind: TargetKind,
}

/// Declares which CSV columns are features (and of what kind) and which is
/// the target. Header columns not listed are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub target: TargetSpec,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: Schema = serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        if schema.columns.is_empty() {
            return Err(DataError::Schema("no feature columns declared".into()));
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Keeps only the named feature columns, in schema order.
    pub fn restrict(&self, keep: &[String]) -> Result<Self, DataError> {
        if let Some(missing) = keep.iter().find(|k| !self.columns.iter().any(|c| &c.name == *k)) {
            return Err(DataError::Schema(format!("feature `{missing}` is not in the schema")));
        }
        Ok(Self {
            target: self.target.clone(),
            columns: self
                .columns
                .iter()
                .filter(|c| keep.contains(&c.name))
                .cloned()
                .collect(),
        })
    }
}

/// How a feature column relates to the source data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Raw categorical column; cells hold the index into `levels`.
    Categorical {
        levels: Vec<String>,
    },
    /// One-hot indicator for `level` of a categorical source column.
    Indicator {
        source: String,
        level: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Index into [`Dataset::groups`]: the source column this one came from.
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor2<f64>,
    pub targets: Targets<f64>,
    pub target_name: String,
    pub columns: Vec<Column>,
    /// Source column names; encoded columns point back here.
    pub groups: Vec<String>,
    pub split: Vec<Split>,
    pub preprocessing: Preprocessing,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows used to fit preprocessing: the training rows, or every row when
    /// no row is marked for training.
    pub fn fitting_rows(&self) -> Vec<usize> {
        let rows = self.rows_in(Split::Train);
        if rows.is_empty() {
            (0..self.n_rows()).collect()
        } else {
            rows
        }
    }

    pub fn features_in(&self, split: Split) -> Tensor2<f64> {
        self.features.select_rows(&self.rows_in(split))
    }

    pub fn targets_in(&self, split: Split) -> Targets<f64> {
        self.targets.select(&self.rows_in(split))
    }

    /// Source-column groups as `(name, member feature indices)`.
    pub fn group_map(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = self.groups.iter().map(|g| (g.clone(), Vec::new())).collect();
        for (j, c) in self.columns.iter().enumerate() {
            out[c.group].1.push(j);
        }
        out.retain(|(_, members)| !members.is_empty());
        out
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes(c) => Some(c.iter().copied().max().map_or(0, |m| m + 1)),
            Targets::Regression(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_parses_and_restricts() {
        let schema = Schema::from_json(
            r#"{"target":{"name":"y","kind":"class"},
                "columns":[{"name":"a","kind":"numeric"},{"name":"b","kind":"categorical"}]}"#,
        )
        .unwrap();
        assert_eq!(schema.columns[1].kind, ColumnType::Categorical);
        let only_b = schema.restrict(&["b".to_string()]).unwrap();
        assert_eq!(only_b.columns.len(), 1);
        assert!(schema.restrict(&["zzz".to_string()]).is_err());
        assert!(Schema::from_json(r#"{"target":{"name":"y","kind":"class"},"columns":[]}"#).is_err());
        assert!(Schema::from_json(r#"{"target":{"name":"y","kind":"weird"},"columns":[]}"#).is_err());
    }
}
