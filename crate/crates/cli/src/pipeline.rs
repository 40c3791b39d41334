//! Steps shared by the subcommands: presets, data preparation, fitting,
//! loading a model against new data, and computing reports.

use std::path::{Path, PathBuf};

use nn_sensitivity::data::{
    load_csv, one_hot_encode, split, standardize, Column, Dataset, Schema, SequenceBatch, Split, SplitFractions,
};
use nn_sensitivity::engine::{self, OutputSelector};
use nn_sensitivity::explain::{self, group_importance, FeatureSubset, ImportanceReport, Metric, Scope};
use nn_sensitivity::models::{
    build_mlp, build_rnn, Activation, Architecture, ModelBundle, ModelSpec, SequenceMode, TrainedModel,
};
use nn_sensitivity::training::{self, DecayMode, LossKind, Targets, TrainConfig, TrainReport};
use serde::{Deserialize, Serialize};

use crate::args::{ScopeArg, DEFAULT_OUT_DIR, OUT_DIR_ENV};
use crate::error::{CliError, CliResult};

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Creates the parent directory of `path` if needed.
pub fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_schema(path: &Path) -> CliResult<Schema> {
    Schema::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn load_data(path: &Path, schema: &Schema) -> CliResult<Dataset> {
    load_csv(path, schema).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn parse_selector(text: Option<&str>) -> CliResult<Option<OutputSelector>> {
    text.map(|s| s.parse().map_err(CliError::usage)).transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentSettings {
    pub hidden: usize,
    pub seq_len: usize,
    pub mode: SequenceMode,
}

/// Everything that determines a training run apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub preset: Option<String>,
    /// Hidden widths of a dense network.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Set for Elman networks over windows of consecutive rows.
    pub recurrent: Option<RecurrentSettings>,
    pub standardize: bool,
    /// Share of rows for training; the rest are test rows. Recurrent data is
    /// split chronologically, tabular data by a seeded shuffle.
    pub train_fraction: f64,
    pub split_seed: u64,
    pub config: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            preset: None,
            hidden: vec![64],
            activation: Activation::Tanh,
            recurrent: None,
            standardize: true,
            train_fraction: 0.8,
            split_seed: 0,
            config: TrainConfig::default(),
        }
    }
}

impl TrainSettings {
    /// 5-64-32-1 ReLU regression on 8,500 of 10,000 synthetic rows. The
    /// inputs are already standard normal, so they are not rescaled.
    pub fn sim_regression() -> Self {
        Self {
            preset: Some("sim-regression".into()),
            hidden: vec![64, 32],
            activation: Activation::Relu,
            recurrent: None,
            standardize: false,
            train_fraction: 0.85,
            split_seed: 1,
            config: TrainConfig {
                loss: LossKind::Mse,
                learning_rate: 1e-3,
                batch_size: 32,
                max_epochs: 300,
                patience: 20,
                ..TrainConfig::default()
            },
        }
    }

    /// One tanh layer of 64 units and a two-way softmax; 25,000 of 30,000
    /// rows for training.
    pub fn credit_fcn() -> Self {
        Self {
            preset: Some("credit-fcn".into()),
            hidden: vec![64],
            activation: Activation::Tanh,
            recurrent: None,
            standardize: true,
            train_fraction: 25.0 / 30.0,
            split_seed: 1,
            config: TrainConfig {
                loss: LossKind::CrossEntropy,
                learning_rate: 0.002,
                decay: 0.001,
                decay_mode: DecayMode::InverseTimeEpoch,
                l1_weight: 0.01,
                max_epochs: 100,
                batch_size: 128,
                patience: 10,
                ..TrainConfig::default()
            },
        }
    }

    /// Overlays the fields present in a (possibly partial) training config JSON.
    pub fn merge_config_json(&mut self, text: &str) -> CliResult<()> {
        let overlay: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(fields) = overlay else {
            return Err(CliError::usage("training config must be a JSON object"));
        };
        let mut base = serde_json::to_value(&self.config)?;
        let known = base
            .as_object()
            .map(|o| o.keys().cloned().collect::<Vec<_>>())
            .unwrap_or_default();
        for (k, v) in fields {
            if !known.contains(&k) {
                return Err(CliError::usage(format!("unknown training config field `{k}`")));
            }
            base[k] = v;
        }
        self.config = serde_json::from_value(base)?;
        Ok(())
    }

    /// Parses `64,32` or `rnn:H`.
    pub fn apply_arch(&mut self, arch: &str) -> CliResult<()> {
        if let Some(hidden) = arch.strip_prefix("rnn:") {
            let hidden = hidden
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("invalid recurrent width in `{arch}`")))?;
            let current = self.recurrent.clone();
            self.recurrent = Some(RecurrentSettings {
                hidden,
                seq_len: current.as_ref().map_or(4, |r| r.seq_len),
                mode: current.map_or(SequenceMode::ManyToOne, |r| r.mode),
            });
            return Ok(());
        }
        let widths: Result<Vec<usize>, _> = arch
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        self.hidden = widths.map_err(|_| CliError::usage(format!("invalid architecture `{arch}`")))?;
        self.recurrent = None;
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(CliError::usage(format!(
                "train fraction {} must lie in (0, 1]",
                self.train_fraction
            )));
        }
        if self.hidden.contains(&0) {
            return Err(CliError::usage("hidden widths must be positive"));
        }
        if let Some(r) = &self.recurrent {
            if r.hidden == 0 || r.seq_len == 0 {
                return Err(CliError::usage("recurrent width and sequence length must be positive"));
            }
        }
        self.config.validate()?;
        Ok(())
    }
}

/// Training provenance stored in the model file's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub settings: TrainSettings,
    pub data_sha256: Option<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

impl Provenance {
    pub fn of(bundle: &ModelBundle) -> Option<Self> {
        serde_json::from_value(bundle.metadata.clone()).ok()
    }
}

/// Keeps the named source columns of a freshly loaded dataset, in order.
pub fn select_raw_columns(raw: &Dataset, keep: &[String]) -> CliResult<Dataset> {
    if let Some(missing) = keep.iter().find(|k| !raw.groups.contains(k)) {
        return Err(CliError::usage(format!("feature `{missing}` is not in the data")));
    }
    let picked: Vec<usize> = (0..raw.columns.len())
        .filter(|&j| keep.contains(&raw.groups[raw.columns[j].group]))
        .collect();
    let groups: Vec<String> = raw.groups.iter().filter(|g| keep.contains(g)).cloned().collect();
    let columns = picked
        .iter()
        .map(|&j| {
            let c = &raw.columns[j];
            let name = &raw.groups[c.group];
            Column {
                group: groups.iter().position(|g| g == name).expect("kept group"),
                ..c.clone()
            }
        })
        .collect();
    Ok(Dataset {
        features: raw.features.select_columns(&picked),
        columns,
        groups,
        ..raw.clone()
    })
}

/// Source-column names behind a subset. Encoded indicator names
/// (`source=level`) map back to their source column.
pub fn subset_source_columns(subset: &FeatureSubset, groups: &[String]) -> CliResult<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for name in &subset.names {
        let source = if groups.contains(name) {
            name.clone()
        } else {
            match name.split_once('=') {
                Some((source, _)) if groups.iter().any(|g| g == source) => source.to_string(),
                _ => return Err(CliError::usage(format!("subset feature `{name}` is not in the data"))),
            }
        };
        if !out.contains(&source) {
            out.push(source);
        }
    }
    Ok(out)
}

/// Marks the first `round(fraction · n)` rows as training rows.
fn chronological_split(raw: &Dataset, fraction: f64) -> Dataset {
    let n = raw.n_rows();
    let train = ((fraction * n as f64).round() as usize).min(n);
    let mut out = raw.clone();
    out.split = (0..n)
        .map(|r| if r < train { Split::Train } else { Split::Test })
        .collect();
    out
}

/// Replays the split recorded in `settings` on raw data.
pub fn assign_split(raw: &Dataset, settings: &TrainSettings) -> CliResult<Dataset> {
    if settings.recurrent.is_some() {
        Ok(chronological_split(raw, settings.train_fraction))
    } else {
        Ok(split(
            raw,
            SplitFractions::train_test(settings.train_fraction),
            settings.split_seed,
        )?)
    }
}

/// Split, one-hot encoding and optional standardization, all fitted on the
/// training rows.
pub fn prepare(raw: &Dataset, settings: &TrainSettings) -> CliResult<Dataset> {
    let ds = one_hot_encode(&assign_split(raw, settings)?);
    Ok(if settings.standardize { standardize(&ds) } else { ds })
}

fn regression_series(ds: &Dataset) -> CliResult<Vec<f64>> {
    match &ds.targets {
        Targets::Regression(t) if t.cols() == 1 => Ok(t.column(0)),
        _ => Err(CliError::usage("recurrent models need a single regression target")),
    }
}

/// Windows over the consecutive rows `rows` (ascending, contiguous).
pub fn windows(ds: &Dataset, rows: &[usize], recurrent: &RecurrentSettings) -> CliResult<SequenceBatch<f64>> {
    let series = regression_series(ds)?;
    let x = ds.features.select_rows(rows);
    let y: Vec<f64> = rows.iter().map(|&r| series[r]).collect();
    Ok(SequenceBatch::from_series(&x, &y, recurrent.seq_len, recurrent.mode)?)
}

pub fn model_spec(ds: &Dataset, settings: &TrainSettings) -> CliResult<ModelSpec> {
    let p = ds.n_features();
    let seed = settings.config.seed;
    if let Some(r) = &settings.recurrent {
        let mut spec = ModelSpec::rnn(p, r.hidden, r.seq_len, r.mode, seed);
        if let Architecture::Rnn { hidden_activation, .. } = &mut spec.architecture {
            *hidden_activation = settings.activation;
        }
        return Ok(spec);
    }
    let (outputs, output_activation) = match &ds.targets {
        Targets::Classes(_) => (ds.n_classes().unwrap_or(0).max(2), Activation::Softmax),
        Targets::Regression(t) => (t.cols(), Activation::Linear),
    };
    let mut widths = vec![p];
    widths.extend(&settings.hidden);
    widths.push(outputs);
    let mut activations = vec![settings.activation; settings.hidden.len()];
    activations.push(output_activation);
    Ok(ModelSpec::mlp(&widths, &activations, seed))
}

pub struct FitOutcome {
    pub bundle: ModelBundle,
    pub report: TrainReport,
    /// The prepared dataset the model was trained on.
    pub dataset: Dataset,
}

/// Prepares the data, trains, and packages the result.
///
/// `schema` is stored in the bundle so `explain` can reload the same columns.
pub fn fit_model(
    raw: &Dataset,
    schema: &Schema,
    settings: &TrainSettings,
    feature_subset: Option<Vec<String>>,
    data_sha256: Option<String>,
) -> CliResult<FitOutcome> {
    let mut settings = settings.clone();
    settings.config.loss = raw.targets.natural_loss();
    settings.validate()?;
    let ds = prepare(raw, &settings)?;
    let spec = model_spec(&ds, &settings)?;
    let train_rows = ds.rows_in(Split::Train);
    let test_rows = ds.rows_in(Split::Test);
    let (model, report) = match &settings.recurrent {
        None => {
            let net = build_mlp::<f64>(&spec)?;
            let (net, report) = training::train(&net, &ds, &settings.config)?;
            (TrainedModel::Mlp(net), report)
        }
        Some(r) => {
            let all = windows(&ds, &train_rows, r)?;
            // Early stopping holds out the most recent training windows.
            let n = all.n_sequences();
            let held = (settings.config.validation_fraction * n as f64).round() as usize;
            let (fit, validation) = if held > 0 && held < n {
                let cut: Vec<usize> = (0..n - held).collect();
                let rest: Vec<usize> = (n - held..n).collect();
                (all.select(&cut), Some(all.select(&rest)))
            } else {
                (all, None)
            };
            let test = if test_rows.len() >= r.seq_len {
                Some(windows(&ds, &test_rows, r)?)
            } else {
                None
            };
            let rnn = build_rnn::<f64>(&spec)?;
            let (rnn, report) =
                training::train_sequences(&rnn, &fit, validation.as_ref(), test.as_ref(), &settings.config)?;
            (TrainedModel::Rnn(rnn), report)
        }
    };
    let schema = match &feature_subset {
        Some(keep) => schema.restrict(keep)?,
        None => schema.clone(),
    };
    let provenance = Provenance {
        settings: settings.clone(),
        data_sha256,
        train_rows: train_rows.len(),
        test_rows: test_rows.len(),
    };
    let bundle = ModelBundle {
        spec,
        model,
        preprocessing: ds.preprocessing.clone(),
        schema: Some(schema),
        columns: ds.columns.clone(),
        groups: ds.groups.clone(),
        feature_subset,
        train_seed: settings.config.seed,
        metadata: serde_json::to_value(provenance)?,
    };
    Ok(FitOutcome {
        bundle,
        report,
        dataset: ds,
    })
}

/// Loads `data` with the model's schema, replays its split and
/// preprocessing, and checks the encoded columns match the model inputs.
pub fn load_for_model(bundle: &ModelBundle, data: &Path, schema_override: Option<&Path>) -> CliResult<Dataset> {
    let schema = match schema_override {
        Some(p) => load_schema(p)?,
        None => bundle
            .schema
            .clone()
            .ok_or_else(|| CliError::usage("model file has no schema; pass --schema"))?,
    };
    let mut raw = load_data(data, &schema)?;
    if let Some(keep) = &bundle.feature_subset {
        if raw.groups.len() != keep.len() {
            raw = select_raw_columns(&raw, keep)?;
        }
    }
    let raw = match Provenance::of(bundle) {
        Some(p) => assign_split(&raw, &p.settings)?,
        None => raw,
    };
    let ds = bundle.preprocessing.apply(&raw)?;
    let expected: Vec<String> = bundle.columns.iter().map(|c| c.name.clone()).collect();
    if ds.feature_names() != expected {
        return Err(CliError::usage(format!(
            "data encodes to {} input columns but the model expects {} ({})",
            ds.n_features(),
            expected.len(),
            expected.join(", ")
        )));
    }
    Ok(ds)
}

pub fn rows_for(ds: &Dataset, rows: crate::args::RowsArg) -> CliResult<Vec<usize>> {
    use crate::args::RowsArg;
    let picked = match rows {
        RowsArg::All => (0..ds.n_rows()).collect(),
        RowsArg::Train => ds.rows_in(Split::Train),
        RowsArg::Test => ds.rows_in(Split::Test),
    };
    if picked.is_empty() {
        return Err(CliError::usage(format!("no {rows:?} rows to explain").to_lowercase()));
    }
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct ExplainRequest {
    pub scope: ScopeArg,
    pub sample_id: Option<usize>,
    pub selector: Option<OutputSelector>,
    pub raw_units: bool,
    pub group: bool,
    pub all_lags: bool,
}

impl ExplainRequest {
    pub fn global() -> Self {
        Self {
            scope: ScopeArg::Global,
            sample_id: None,
            selector: None,
            raw_units: false,
            group: false,
            all_lags: false,
        }
    }
}

fn input_scales(ds: &Dataset) -> Vec<f64> {
    ds.preprocessing
        .scaler
        .as_ref()
        .map_or_else(|| vec![1.0; ds.n_features()], |s| s.scales.clone())
}

/// Computes the requested report for `rows` of a dataset prepared by
/// [`load_for_model`] or [`prepare`].
pub fn compute_report(
    model: &TrainedModel,
    ds: &Dataset,
    rows: &[usize],
    request: &ExplainRequest,
    settings: Option<&TrainSettings>,
) -> CliResult<ImportanceReport> {
    let names = ds.feature_names();
    let report = match model {
        TrainedModel::Mlp(net) => {
            let selector = request.selector.unwrap_or_else(|| OutputSelector::default_for(net));
            let scales = input_scales(ds);
            match request.scope {
                ScopeArg::Global => {
                    let mut jac = engine::input_jacobian_batch(net, &ds.features.select_rows(rows), selector)?;
                    if request.raw_units {
                        jac = jac.rescale_columns(&scales);
                    }
                    explain::global_importance_iid(&jac, &names)?.with_selector(selector)
                }
                ScopeArg::Local => {
                    let id = request
                        .sample_id
                        .ok_or_else(|| CliError::usage("local scope needs --sample-id"))?;
                    let &row = rows.get(id).ok_or_else(|| {
                        CliError::usage(format!("sample id {id} out of range for {} rows", rows.len()))
                    })?;
                    let mut g = engine::input_gradient(net, ds.features.row(row), selector)?;
                    if request.raw_units {
                        for (v, s) in g.iter_mut().zip(&scales) {
                            *v = if *s == 0.0 { 0.0 } else { *v / s };
                        }
                    }
                    let raw = g.iter().map(|v| v * v).collect();
                    ImportanceReport::from_raw(Scope::Local { sample: Some(id) }, Metric::Local, names, raw, 1)?
                        .with_selector(selector)
                }
                ScopeArg::Lag => return Err(CliError::usage("lag scope needs a recurrent model")),
            }
        }
        TrainedModel::Rnn(rnn) => {
            if request.raw_units {
                return Err(CliError::usage("--raw-units is only supported for dense models"));
            }
            let recurrent = settings.and_then(|s| s.recurrent.clone()).unwrap_or(RecurrentSettings {
                hidden: rnn.hidden_width(),
                seq_len: rnn.seq_len,
                mode: rnn.mode,
            });
            let batch = windows(ds, rows, &recurrent)?;
            let selector = request.selector.unwrap_or(OutputSelector::Output(0));
            match (request.scope, rnn.mode) {
                (ScopeArg::Global, SequenceMode::ManyToOne) if request.all_lags => {
                    explain::global_importance_many_to_one_all_lags(rnn, &batch, selector, &names)?
                }
                (ScopeArg::Global, SequenceMode::ManyToOne) => {
                    explain::global_importance_many_to_one(rnn, &batch, selector, &names)?
                }
                (ScopeArg::Global, SequenceMode::ManyToMany) => {
                    explain::global_importance_many_to_many(rnn, &batch, selector, &names)?
                }
                (ScopeArg::Local, _) => {
                    return Err(CliError::usage(
                        "local scope is for dense models; use --scope lag --sample-id for one sequence",
                    ))
                }
                (ScopeArg::Lag, _) => match request.sample_id {
                    Some(id) => {
                        if id >= batch.n_sequences() {
                            return Err(CliError::usage(format!(
                                "sequence id {id} out of range for {} windows",
                                batch.n_sequences()
                            )));
                        }
                        let mut r = explain::lag_importance_local(rnn, &batch.sequence(id), selector)?;
                        r.scope = Scope::LagLocal { sequence: Some(id) };
                        r
                    }
                    None => explain::lag_importance_global(rnn, &batch, selector)?,
                },
            }
        }
    };
    if request.group {
        if request.scope == ScopeArg::Lag {
            return Err(CliError::usage("--group does not apply to lag reports"));
        }
        return Ok(group_importance(&report, &ds.group_map())?);
    }
    Ok(report)
}
