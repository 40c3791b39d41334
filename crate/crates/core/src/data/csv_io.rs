use std::io::{Read, Write};
use std::path::Path;

use super::{Column, ColumnKind, ColumnType, DataError, Dataset, Preprocessing, Schema, Split, TargetKind};
use crate::tensor::Tensor2;
use crate::training::loss::Targets;

/// Reads a headed CSV file according to `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.iter().all(String::is_empty) {
        return Err(DataError::EmptyFile);
    }
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let target_at = position(&schema.target.name)?;
    let feature_at = schema
        .columns
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<Vec<_>, _>>()?;

    let p = schema.columns.len();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); p];
    let mut values = Vec::new();
    let mut regression = Vec::new();
    let mut classes = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        rows += 1;
        let line = record.position().map_or(rows + 1, |pos| pos.line() as usize);
        let parse_err = |column: &str, value: &str, expected: &'static str| DataError::Parse {
            row: rows,
            line,
            column: column.to_string(),
            value: value.to_string(),
            expected,
        };
        for (j, (spec, &at)) in schema.columns.iter().zip(&feature_at).enumerate() {
            let cell = record.get(at).unwrap_or("");
            match spec.kind {
                ColumnType::Numeric => {
                    let v: f64 = cell
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| parse_err(&spec.name, cell, "a finite number"))?;
                    values.push(v);
                }
                ColumnType::Categorical => {
                    if cell.is_empty() {
                        return Err(parse_err(&spec.name, cell, "a category label"));
                    }
                    let code = match levels[j].iter().position(|l| l == cell) {
                        Some(code) => code,
                        None => {
                            levels[j].push(cell.to_string());
                            levels[j].len() - 1
                        }
                    };
                    values.push(code as f64);
                }
            }
        }
        let cell = record.get(target_at).unwrap_or("");
        match schema.target.kind {
            TargetKind::Regression => {
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| parse_err(&schema.target.name, cell, "a finite number"))?;
                regression.push(v);
            }
            TargetKind::Class => {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(&schema.target.name, cell, "a class label"))?;
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(parse_err(
                        &schema.target.name,
                        cell,
                        "a non-negative integer class label",
                    ));
                }
                classes.push(v as usize);
            }
        }
    }
    if rows == 0 {
        return Err(DataError::EmptyFile);
    }

    let columns = schema
        .columns
        .iter()
        .zip(levels)
        .enumerate()
        .map(|(j, (spec, levels))| Column {
            name: spec.name.clone(),
            kind: match spec.kind {
                ColumnType::Numeric => ColumnKind::Numeric,
                ColumnType::Categorical => ColumnKind::Categorical { levels },
            },
            group: j,
        })
        .collect();
    let targets = match schema.target.kind {
        TargetKind::Regression => Targets::Regression(Tensor2::new(rows, 1, regression).expect("one per row")),
        TargetKind::Class => Targets::Classes(classes),
    };
    Ok(Dataset {
        features: Tensor2::new(rows, p, values).expect("one value per cell"),
        targets,
        target_name: schema.target.name.clone(),
        columns,
        groups: schema.columns.iter().map(|c| c.name.clone()).collect(),
        split: vec![Split::Train; rows],
        preprocessing: Preprocessing::default(),
    })
}

/// Writes features and target with a header row. Categorical cells are
/// written as their labels; numbers use the shortest round-trip form.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&dataset.target_name);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for r in 0..dataset.n_rows() {
        record.clear();
        for (c, &v) in dataset.columns.iter().zip(dataset.features.row(r)) {
            record.push(match &c.kind {
                ColumnKind::Categorical { levels } => levels[v as usize].clone(),
                _ => v.to_string(),
            });
        }
        record.push(match &dataset.targets {
            Targets::Regression(t) => t.get(r, 0).to_string(),
            Targets::Classes(c) => c[r].to_string(),
        });
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}
