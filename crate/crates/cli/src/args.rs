use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nn_sensitivity::data::SYNTHETIC_NOISE_SD;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NNSENS_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "nnsens-out";

#[derive(Debug, Parser)]
#[command(
    name = "nnsens",
    version,
    about = "Sensitivity-based feature importance for neural networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic additive regression dataset as CSV.
    Simulate(SimulateArgs),
    /// Train a dense or recurrent network on a CSV file.
    Train(TrainArgs),
    /// Rank input features (or time lags) of a trained model.
    Explain(ExplainArgs),
    /// Keep the top-ranked features covering a share of global importance.
    Select(SelectArgs),
    /// Compare engine gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Rerun a full experiment: train, explain, select and retrain per seed.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = SYNTHETIC_NOISE_SD)]
    pub noise_sd: f64,
    /// Output CSV (default: `$NNSENS_OUT_DIR/synthetic.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 64/32 ReLU regression net for the synthetic dataset, 85/15 split, no scaling.
    SimRegression,
    /// 64 tanh units with a two-way softmax for the credit dataset.
    CreditFcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Linear,
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecayModeArg {
    Epoch,
    Step,
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SequenceModeArg {
    ManyToOne,
    ManyToMany,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Column schema (JSON). Optional with `--preset sim-regression`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Hidden layer widths, e.g. `64,32`; `rnn:16` builds an Elman network
    /// with 16 hidden units over windows of `--seq-len` rows.
    #[arg(long)]
    pub arch: Option<String>,
    /// Hidden-layer activation.
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long, value_enum)]
    pub sequence_mode: Option<SequenceModeArg>,
    /// Training config JSON; any subset of fields overrides the preset.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long, value_enum)]
    pub decay_mode: Option<DecayModeArg>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Share of training rows held out for early stopping.
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Share of rows used for training; the rest is the test set.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Seeds weight initialization and mini-batch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seeds the train/test split.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Standardize inputs with training-row statistics.
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Feature subset file from `select`; only those columns are used.
    #[arg(long)]
    pub feature_subset: Option<PathBuf>,
    /// Model file (default: `$NNSENS_OUT_DIR/model.nns`). The training report
    /// and manifest are written beside it.
    #[arg(long)]
    pub out_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Global,
    Local,
    Lag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RowsArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Svg,
    Text,
}

impl FormatArg {
    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Json => "json",
            FormatArg::Csv => "csv",
            FormatArg::Svg => "svg",
            FormatArg::Text => "txt",
        }
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the schema stored in the model file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "global")]
    pub scope: ScopeArg,
    /// Row (or window) within the selected rows, for local and per-sequence lag reports.
    #[arg(long)]
    pub sample_id: Option<usize>,
    /// Which rows of the file to explain; `train`/`test` replay the split used in training.
    #[arg(long, value_enum, default_value = "all")]
    pub rows: RowsArg,
    /// One or more of json, csv, svg, text (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    pub format: Vec<FormatArg>,
    /// Output directory (default: `$NNSENS_OUT_DIR`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Output file stem (default: `<scope>_importance`).
    #[arg(long)]
    pub name: Option<String>,
    /// Output to differentiate: `output:K`, `K`, `positive` or `predicted`.
    #[arg(long)]
    pub selector: Option<String>,
    /// Report sensitivities to raw rather than standardized inputs.
    #[arg(long)]
    pub raw_units: bool,
    /// Sum one-hot indicators back into their source columns.
    #[arg(long)]
    pub group: bool,
    /// Many-to-one models: also count inputs at earlier steps.
    #[arg(long)]
    pub all_lags: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, required_unless_present = "report")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "report")]
    pub data: Option<PathBuf>,
    /// Select from an existing global report instead of computing one.
    #[arg(long, conflicts_with_all = ["model", "data"])]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Percentage of total importance to cover.
    #[arg(long, default_value_t = 90.0)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "train")]
    pub rows: RowsArg,
    /// Rank encoded columns instead of source columns.
    #[arg(long)]
    pub encoded: bool,
    #[arg(long)]
    pub selector: Option<String>,
    /// Subset file (default: `$NNSENS_OUT_DIR/subset.json`).
    #[arg(long)]
    pub out_subset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Check this model file instead of random networks.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write the per-trial summary as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Sim,
    Credit,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Credit CSV (required for `credit`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Credit schema (default: `data/credit_schema.json`).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Run `i` (from 0) trains with seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 90.0)]
    pub threshold: f64,
    /// Overrides the preset's epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Monte-Carlo draws for the synthetic importance oracle.
    #[arg(long, default_value_t = 1_000_000)]
    pub oracle_draws: usize,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory (default: `$NNSENS_OUT_DIR/reproduce-<experiment>`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
