use serde::{Deserialize, Serialize};

use super::{Column, ColumnKind, DataError, Dataset};
use crate::tensor::Tensor2;

/// Category levels seen in the training rows of one categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub column: String,
    pub levels: Vec<String>,
}

/// Per-column affine scaling `(x - mean) / scale`; a zero scale maps the
/// column to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column over `rows`.
    pub fn fit(features: &Tensor2<f64>, rows: &[usize]) -> Self {
        let p = features.cols();
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; p];
        for &r in rows {
            for (m, &v) in means.iter_mut().zip(features.row(r)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for &r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(features.row(r)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = var
            .iter()
            .zip(&means)
            .map(|(&s, &m)| {
                let sd = (s / n).sqrt();
                if sd <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Self { means, scales }
    }

    pub fn transform(&self, features: &Tensor2<f64>) -> Tensor2<f64> {
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(r).iter_mut().zip(&self.means).zip(&self.scales) {
                *v = if s == 0.0 { 0.0 } else { (*v - m) / s };
            }
        }
        out
    }

    /// Undoes [`Standardizer::transform`]; zero-scale columns come back as their mean.
    pub fn inverse_transform(&self, features: &Tensor2<f64>) -> Tensor2<f64> {
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(r).iter_mut().zip(&self.means).zip(&self.scales) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Fitted preprocessing, replayable on raw data loaded with the same schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub one_hot: Vec<CategoryMap>,
    pub scaler: Option<Standardizer>,
}

impl Preprocessing {
    /// Applies the recorded encoding and scaling to a freshly loaded dataset.
    pub fn apply(&self, raw: &Dataset) -> Result<Dataset, DataError> {
        let mut ds = apply_one_hot(raw, &self.one_hot)?;
        if let Some(scaler) = &self.scaler {
            if scaler.means.len() != ds.n_features() {
                return Err(DataError::Shape(format!(
                    "scaler fitted on {} columns, data has {}",
                    scaler.means.len(),
                    ds.n_features()
                )));
            }
            ds.features = scaler.transform(&ds.features);
        }
        ds.preprocessing = self.clone();
        Ok(ds)
    }
}

fn sort_levels(levels: &mut [String]) {
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse().ok()).collect();
    match numeric {
        Some(_) => levels.sort_by(|a, b| {
            let (x, y): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
            x.total_cmp(&y)
        }),
        None => levels.sort(),
    }
}

fn apply_one_hot(raw: &Dataset, maps: &[CategoryMap]) -> Result<Dataset, DataError> {
    let mut columns = Vec::new();
    // (source column, per raw level code: does it name this indicator's level)
    let mut sources: Vec<(usize, Option<Vec<bool>>)> = Vec::new();
    for (j, col) in raw.columns.iter().enumerate() {
        match &col.kind {
            ColumnKind::Categorical { levels } => {
                let map = maps
                    .iter()
                    .find(|m| m.column == col.name)
                    .ok_or_else(|| DataError::Schema(format!("no category map for column `{}`", col.name)))?;
                for level in &map.levels {
                    let hits: Vec<bool> = levels.iter().map(|l| l == level).collect();
                    columns.push(Column {
                        name: format!("{}={}", col.name, level),
                        kind: ColumnKind::Indicator {
                            source: col.name.clone(),
                            level: level.clone(),
                        },
                        group: col.group,
                    });
                    sources.push((j, Some(hits)));
                }
            }
            _ => {
                columns.push(col.clone());
                sources.push((j, None));
            }
        }
    }
    let n = raw.n_rows();
    let mut values = Vec::with_capacity(n * columns.len());
    let mut unseen = 0usize;
    for r in 0..n {
        let row = raw.features.row(r);
        for (src, hits) in &sources {
            match hits {
                None => values.push(row[*src]),
                Some(hits) => values.push(if hits[row[*src] as usize] { 1.0 } else { 0.0 }),
            }
        }
        for (j, col) in raw.columns.iter().enumerate() {
            if let ColumnKind::Categorical { levels } = &col.kind {
                let label = &levels[row[j] as usize];
                let known = maps.iter().any(|m| m.column == col.name && m.levels.contains(label));
                if !known {
                    unseen += 1;
                }
            }
        }
    }
    if unseen > 0 {
        log::warn!("{unseen} categorical cells hold levels unseen during fitting; encoded as all-zero indicators");
    }
    Ok(Dataset {
        features: Tensor2::new(n, columns.len(), values).expect("one value per cell"),
        targets: raw.targets.clone(),
        target_name: raw.target_name.clone(),
        columns,
        groups: raw.groups.clone(),
        split: raw.split.clone(),
        preprocessing: Preprocessing {
            one_hot: maps.to_vec(),
            scaler: raw.preprocessing.scaler.clone(),
        },
    })
}

/// Expands every categorical column into one indicator per level observed in
/// the training rows. Indicators keep the source column's group id; levels
/// unseen in training encode as all zeros.
pub fn one_hot_encode(dataset: &Dataset) -> Dataset {
    let rows = dataset.fitting_rows();
    let maps: Vec<CategoryMap> = dataset
        .columns
        .iter()
        .enumerate()
        .filter_map(|(j, col)| match &col.kind {
            ColumnKind::Categorical { levels } => {
                let mut seen = vec![false; levels.len()];
                for &r in &rows {
                    seen[dataset.features.get(r, j) as usize] = true;
                }
                let mut kept: Vec<String> = levels
                    .iter()
                    .zip(&seen)
                    .filter(|(_, &s)| s)
                    .map(|(l, _)| l.clone())
                    .collect();
                sort_levels(&mut kept);
                Some(CategoryMap {
                    column: col.name.clone(),
                    levels: kept,
                })
            }
            _ => None,
        })
        .collect();
    apply_one_hot(dataset, &maps).expect("maps cover every categorical column")
}

/// Scales every column to zero mean and unit standard deviation over the
/// training rows, then applies that scaling to all rows.
pub fn standardize(dataset: &Dataset) -> Dataset {
    let scaler = Standardizer::fit(&dataset.features, &dataset.fitting_rows());
    for (col, &s) in dataset.columns.iter().zip(&scaler.scales) {
        if s == 0.0 {
            log::warn!("column `{}` is constant on the training rows; mapped to 0", col.name);
        }
    }
    let mut out = dataset.clone();
    out.features = scaler.transform(&dataset.features);
    out.preprocessing.scaler = Some(scaler);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_csv_reader, ColumnSpec, ColumnType, Schema, Split, TargetKind, TargetSpec};

    fn schema(cols: &[(&str, ColumnType)]) -> Schema {
        Schema {
            target: TargetSpec {
                name: "y".into(),
                kind: TargetKind::Regression,
            },
            columns: cols
                .iter()
                .map(|(n, k)| ColumnSpec {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
        }
    }

    #[test]
    fn three_levels_give_three_indicators() {
        let s = schema(&[("c", ColumnType::Categorical), ("x", ColumnType::Numeric)]);
        let text = "c,x,y\nB,1,0\nA,2,0\nC,3,0\nA,4,0\n";
        let ds = one_hot_encode(&load_csv_reader(text.as_bytes(), &s).unwrap());
        assert_eq!(ds.feature_names(), vec!["c=A", "c=B", "c=C", "x"]);
        for r in 0..4 {
            let row = ds.features.row(r);
            assert_eq!(row[..3].iter().sum::<f64>(), 1.0);
        }
        assert_eq!(ds.features.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(ds.group_map(), vec![("c".into(), vec![0, 1, 2]), ("x".into(), vec![3])]);
    }

    #[test]
    fn numeric_only_is_unchanged() {
        let s = schema(&[("a", ColumnType::Numeric), ("b", ColumnType::Numeric)]);
        let raw = load_csv_reader("a,b,y\n1,2,3\n4,5,6\n".as_bytes(), &s).unwrap();
        let enc = one_hot_encode(&raw);
        assert_eq!(enc.features, raw.features);
        assert_eq!(enc.columns, raw.columns);
    }

    #[test]
    fn levels_only_from_training_rows() {
        let s = schema(&[("c", ColumnType::Categorical)]);
        let mut raw = load_csv_reader("c,y\n2,0\n1,0\n10,0\n".as_bytes(), &s).unwrap();
        raw.split = vec![Split::Train, Split::Train, Split::Test];
        let enc = one_hot_encode(&raw);
        // numeric labels sort numerically; "10" was only in a test row
        assert_eq!(enc.preprocessing.one_hot[0].levels, vec!["1", "2"]);
        assert_eq!(enc.features.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn standardization_basics() {
        let s = schema(&[("a", ColumnType::Numeric), ("k", ColumnType::Numeric)]);
        let raw = load_csv_reader("a,k,y\n0,5,0\n2,5,0\n".as_bytes(), &s).unwrap();
        let st = standardize(&raw);
        assert_eq!(st.features.column(0), vec![-1.0, 1.0]);
        assert_eq!(st.features.column(1), vec![0.0, 0.0]);
        let scaler = st.preprocessing.scaler.as_ref().unwrap();
        let back = scaler.inverse_transform(&st.features);
        for (a, b) in back.as_slice().iter().zip(raw.features.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn replay_matches_fit() {
        let s = schema(&[("c", ColumnType::Categorical), ("x", ColumnType::Numeric)]);
        let text = "c,x,y\nB,1,0\nA,2,0\nC,3,0\nA,4,0\n";
        let raw = load_csv_reader(text.as_bytes(), &s).unwrap();
        let fitted = standardize(&one_hot_encode(&raw));
        let replayed = fitted.preprocessing.apply(&raw).unwrap();
        assert_eq!(replayed.features, fitted.features);
        // A new file whose level order differs still maps by label.
        let other = load_csv_reader("c,x,y\nC,1,0\nZ,2,0\n".as_bytes(), &s).unwrap();
        let enc = fitted.preprocessing.apply(&other).unwrap();
        let scaler = fitted.preprocessing.scaler.as_ref().unwrap();
        let unscaled = scaler.inverse_transform(&enc.features);
        assert!((unscaled.get(0, 2) - 1.0).abs() < 1e-12);
        assert!(unscaled.row(1)[..3].iter().all(|v| v.abs() < 1e-12));
    }
}
