//! Single-file model bundles.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, a UTF-8 JSON
//! header of that length, then every parameter array as consecutive
//! little-endian `f64` values in row-major order. The header lists the arrays
//! in file order; see `docs/model_format.md` for the field reference.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assign_parameters, build_mlp, build_rnn, ModelError, ModelSpec, Network, Parameterized, RecurrentNetwork};
use crate::data::{Column, Preprocessing, Schema};

pub const BUNDLE_MAGIC: [u8; 8] = *b"NNSENS\0\x01";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Mlp(Network<f64>),
    Rnn(RecurrentNetwork<f64>),
}

impl TrainedModel {
    fn parameters(&self) -> Vec<&crate::tensor::Tensor2<f64>> {
        match self {
            TrainedModel::Mlp(n) => n.parameters(),
            TrainedModel::Rnn(r) => r.parameters(),
        }
    }

    fn array_names(&self) -> Vec<String> {
        let dense = |prefix: &str, n: &Network<f64>| -> Vec<String> {
            (0..n.layers().len())
                .flat_map(|i| [format!("{prefix}layer{i}.weight"), format!("{prefix}layer{i}.bias")])
                .collect()
        };
        match self {
            TrainedModel::Mlp(n) => dense("", n),
            TrainedModel::Rnn(r) => {
                let mut names = vec!["input_weight".into(), "recurrent_weight".into(), "hidden_bias".into()];
                names.extend(dense("head.", &r.head));
                names
            }
        }
    }
}

/// Shape and position of one parameter array in the data section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayDescriptor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset from the start of the data section.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub preprocessing: Preprocessing,
    pub schema: Option<Schema>,
    pub columns: Vec<Column>,
    pub groups: Vec<String>,
    pub feature_subset: Option<Vec<String>>,
    pub train_seed: u64,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub arrays: Vec<ArrayDescriptor>,
}

/// A trained model together with what is needed to feed it new raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    pub model: TrainedModel,
    pub preprocessing: Preprocessing,
    /// Schema the training data was loaded with.
    pub schema: Option<Schema>,
    /// Encoded input columns, in model input order.
    pub columns: Vec<Column>,
    pub groups: Vec<String>,
    /// Raw columns kept when the model was trained on a selected subset.
    pub feature_subset: Option<Vec<String>>,
    pub train_seed: u64,
    /// Free-form training provenance (configs, split sizes).
    pub metadata: serde_json::Value,
}

impl ModelBundle {
    pub fn network(&self) -> Option<&Network<f64>> {
        match &self.model {
            TrainedModel::Mlp(n) => Some(n),
            TrainedModel::Rnn(_) => None,
        }
    }

    pub fn recurrent(&self) -> Option<&RecurrentNetwork<f64>> {
        match &self.model {
            TrainedModel::Rnn(r) => Some(r),
            TrainedModel::Mlp(_) => None,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_bundle(self, &mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        read_bundle(&mut file)
    }
}

fn format_err(msg: impl Into<String>) -> ModelError {
    ModelError::Format(msg.into())
}

fn rebuild(spec: &ModelSpec) -> Result<TrainedModel, ModelError> {
    Ok(if spec.is_recurrent() {
        TrainedModel::Rnn(build_rnn(spec)?)
    } else {
        TrainedModel::Mlp(build_mlp(spec)?)
    })
}

fn shapes(model: &TrainedModel) -> Vec<(usize, usize)> {
    model.parameters().iter().map(|p| p.shape()).collect()
}

pub fn write_bundle<W: Write>(bundle: &ModelBundle, mut writer: W) -> Result<(), ModelError> {
    let template = rebuild(&bundle.spec)?;
    if shapes(&template) != shapes(&bundle.model) {
        return Err(format_err("model shapes do not match its spec"));
    }
    let params = bundle.model.parameters();
    let mut offset = 0u64;
    let arrays = bundle
        .model
        .array_names()
        .into_iter()
        .zip(&params)
        .map(|(name, p)| {
            let d = ArrayDescriptor {
                name,
                rows: p.rows(),
                cols: p.cols(),
                offset,
            };
            offset += (p.as_slice().len() * 8) as u64;
            d
        })
        .collect();
    let header = BundleHeader {
        format_version: FORMAT_VERSION,
        spec: bundle.spec.clone(),
        preprocessing: bundle.preprocessing.clone(),
        schema: bundle.schema.clone(),
        columns: bundle.columns.clone(),
        groups: bundle.groups.clone(),
        feature_subset: bundle.feature_subset.clone(),
        train_seed: bundle.train_seed,
        metadata: bundle.metadata.clone(),
        arrays,
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err(e.to_string()))?;
    writer.write_all(&BUNDLE_MAGIC)?;
    writer.write_all(&(json.len() as u64).to_le_bytes())?;
    writer.write_all(&json)?;
    for p in params {
        for v in p.as_slice() {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact_or<R: Read>(reader: &mut R, buf: &mut [u8], what: &str) -> Result<(), ModelError> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("file truncated in {what}")),
        _ => ModelError::Io(e),
    })
}

pub fn read_bundle<R: Read>(mut reader: R) -> Result<ModelBundle, ModelError> {
    let mut magic = [0u8; 8];
    read_exact_or(&mut reader, &mut magic, "magic")?;
    if magic != BUNDLE_MAGIC {
        return Err(format_err("not a model file (bad magic bytes)"));
    }
    let mut len = [0u8; 8];
    read_exact_or(&mut reader, &mut len, "header length")?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER_BYTES {
        return Err(format_err(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    read_exact_or(&mut reader, &mut json, "header")?;
    let header: BundleHeader = serde_json::from_slice(&json).map_err(|e| format_err(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let mut model = rebuild(&header.spec)?;
    let expected = shapes(&model);
    let found: Vec<(usize, usize)> = header.arrays.iter().map(|a| (a.rows, a.cols)).collect();
    if expected != found {
        return Err(format_err(format!(
            "array shapes {found:?} do not match the spec's {expected:?}"
        )));
    }
    let mut offset = 0u64;
    for a in &header.arrays {
        if a.offset != offset {
            return Err(format_err(format!(
                "array `{}` has offset {}, expected {offset}",
                a.name, a.offset
            )));
        }
        offset += (a.rows * a.cols * 8) as u64;
    }
    let total: usize = expected.iter().map(|(r, c)| r * c).sum();
    let mut raw = vec![0u8; total * 8];
    read_exact_or(&mut reader, &mut raw, "weight arrays")?;
    let mut extra = [0u8; 1];
    if reader.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after the weight arrays"));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    match &mut model {
        TrainedModel::Mlp(n) => assign_parameters(n, &flat),
        TrainedModel::Rnn(r) => assign_parameters(r, &flat),
    }
    Ok(ModelBundle {
        spec: header.spec,
        model,
        preprocessing: header.preprocessing,
        schema: header.schema,
        columns: header.columns,
        groups: header.groups,
        feature_subset: header.feature_subset,
        train_seed: header.train_seed,
        metadata: header.metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CategoryMap, ColumnKind, Standardizer};
    use crate::models::{Activation, SequenceMode};

    fn mlp_bundle() -> ModelBundle {
        let spec = ModelSpec::mlp(&[3, 4, 2], &[Activation::Tanh, Activation::Softmax], 9);
        let mut net: Network<f64> = build_mlp(&spec).unwrap();
        // Values that would not survive a decimal round trip.
        net.layers_mut()[0].bias.set(0, 1, 0.1 + 0.2);
        net.layers_mut()[1].weight.set(1, 3, f64::MIN_POSITIVE);
        ModelBundle {
            spec,
            model: TrainedModel::Mlp(net),
            preprocessing: Preprocessing {
                one_hot: vec![CategoryMap {
                    column: "c".into(),
                    levels: vec!["1".into(), "2".into()],
                }],
                scaler: Some(Standardizer {
                    means: vec![0.5, 0.5, 1.0 / 3.0],
                    scales: vec![0.5, 0.5, 0.0],
                }),
            },
            schema: None,
            columns: vec![
                Column {
                    name: "c=1".into(),
                    kind: ColumnKind::Indicator {
                        source: "c".into(),
                        level: "1".into(),
                    },
                    group: 0,
                },
                Column {
                    name: "c=2".into(),
                    kind: ColumnKind::Indicator {
                        source: "c".into(),
                        level: "2".into(),
                    },
                    group: 0,
                },
                Column {
                    name: "x".into(),
                    kind: ColumnKind::Numeric,
                    group: 1,
                },
            ],
            groups: vec!["c".into(), "x".into()],
            feature_subset: Some(vec!["c".into(), "x".into()]),
            train_seed: 42,
            metadata: serde_json::json!({"epochs": 3}),
        }
    }

    fn round_trip(b: &ModelBundle) -> ModelBundle {
        let mut bytes = Vec::new();
        write_bundle(b, &mut bytes).unwrap();
        read_bundle(bytes.as_slice()).unwrap()
    }

    #[test]
    fn mlp_round_trip_is_lossless() {
        let b = mlp_bundle();
        let back = round_trip(&b);
        assert_eq!(back, b);
        let bits = |m: &ModelBundle| -> Vec<u64> {
            m.model
                .parameters()
                .iter()
                .flat_map(|p| p.as_slice().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&back), bits(&b));
    }

    #[test]
    fn rnn_round_trip_is_lossless() {
        let spec = ModelSpec::rnn(2, 3, 4, SequenceMode::ManyToMany, 1);
        let b = ModelBundle {
            model: TrainedModel::Rnn(build_rnn(&spec).unwrap()),
            spec,
            preprocessing: Preprocessing::default(),
            schema: None,
            columns: Vec::new(),
            groups: Vec::new(),
            feature_subset: None,
            train_seed: 0,
            metadata: serde_json::Value::Null,
        };
        assert_eq!(round_trip(&b), b);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let mut bytes = Vec::new();
        write_bundle(&mlp_bundle(), &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_bundle(bad.as_slice()), Err(ModelError::Format(m)) if m.contains("magic")));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_bundle(truncated), Err(ModelError::Format(m)) if m.contains("truncated")));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(read_bundle(long.as_slice()), Err(ModelError::Format(m)) if m.contains("trailing")));

        assert!(read_bundle(&b"hello"[..]).is_err());
    }

    #[test]
    fn model_must_match_spec() {
        let mut b = mlp_bundle();
        b.spec = ModelSpec::mlp(&[3, 5, 2], &[Activation::Tanh, Activation::Softmax], 9);
        assert!(write_bundle(&b, Vec::new()).is_err());
    }
}
