use nn_sensitivity::data::synthetic_schema;
use nn_sensitivity::explain::FeatureSubset;
use nn_sensitivity::models::SequenceMode;
use nn_sensitivity::training::{DecayMode, Metric};

use crate::args::{ActivationArg, DecayModeArg, Preset, SequenceModeArg, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, ManifestBuilder};
use crate::pipeline::{
    create_parent, default_out_dir, fit_model, load_data, load_schema, read_file, select_raw_columns,
    subset_source_columns, write_file, TrainSettings,
};

pub fn activation(arg: ActivationArg) -> nn_sensitivity::models::Activation {
    use nn_sensitivity::models::Activation;
    match arg {
        ActivationArg::Linear => Activation::Linear,
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Tanh => Activation::Tanh,
    }
}

/// Preset, then config file, then individual flags.
pub fn resolve_settings(args: &TrainArgs) -> CliResult<TrainSettings> {
    let mut s = match args.preset {
        Some(Preset::SimRegression) => TrainSettings::sim_regression(),
        Some(Preset::CreditFcn) => TrainSettings::credit_fcn(),
        None => TrainSettings::default(),
    };
    if let Some(path) = &args.train_config {
        s.merge_config_json(&read_file(path)?)
            .map_err(|e| e.context(path.display()))?;
    }
    if let Some(arch) = &args.arch {
        s.apply_arch(arch)?;
    }
    if let Some(a) = args.activation {
        s.activation = activation(a);
    }
    if args.seq_len.is_some() || args.sequence_mode.is_some() {
        let r = s
            .recurrent
            .as_mut()
            .ok_or_else(|| CliError::usage("--seq-len and --sequence-mode need --arch rnn:H"))?;
        if let Some(t) = args.seq_len {
            r.seq_len = t;
        }
        if let Some(m) = args.sequence_mode {
            r.mode = match m {
                SequenceModeArg::ManyToOne => SequenceMode::ManyToOne,
                SequenceModeArg::ManyToMany => SequenceMode::ManyToMany,
            };
        }
    }
    let c = &mut s.config;
    if let Some(v) = args.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = args.decay {
        c.decay = v;
    }
    if let Some(v) = args.decay_mode {
        c.decay_mode = match v {
            DecayModeArg::Epoch => DecayMode::InverseTimeEpoch,
            DecayModeArg::Step => DecayMode::InverseTimeStep,
            DecayModeArg::Weight => DecayMode::WeightDecay,
        };
    }
    if let Some(v) = args.l1 {
        c.l1_weight = v;
    }
    if let Some(v) = args.epochs {
        c.max_epochs = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.patience {
        c.patience = v;
    }
    if let Some(v) = args.validation_fraction {
        c.validation_fraction = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.split_seed {
        s.split_seed = v;
    }
    if let Some(v) = args.standardize {
        s.standardize = v;
    }
    if let Some(v) = args.train_fraction {
        s.train_fraction = v;
    }
    s.validate()?;
    Ok(s)
}

pub fn run(args: &TrainArgs, argv: &[String]) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("train", argv);
    let settings = resolve_settings(args)?;
    let schema = match (&args.schema, args.preset) {
        (Some(path), _) => {
            manifest.input(path)?;
            load_schema(path)?
        }
        (None, Some(Preset::SimRegression)) => synthetic_schema(),
        (None, _) => return Err(CliError::usage("--schema is required unless --preset sim-regression")),
    };
    let mut raw = load_data(&args.data, &schema)?;
    manifest.input(&args.data)?;
    let data_sha = manifest.manifest().inputs.last().map(|i| i.sha256.clone());
    let subset = match &args.feature_subset {
        Some(path) => {
            manifest.input(path)?;
            let subset =
                FeatureSubset::from_json(&read_file(path)?).map_err(|e| CliError::from(e).context(path.display()))?;
            let keep = subset_source_columns(&subset, &raw.groups)?;
            raw = select_raw_columns(&raw, &keep)?;
            Some(keep)
        }
        None => None,
    };
    manifest
        .config(&settings)
        .seed("model", settings.config.seed)
        .seed("split", settings.split_seed)
        .phase("load");
    let fit = fit_model(&raw, &schema, &settings, subset, data_sha)?;
    manifest.phase("train");

    let out = args
        .out_model
        .clone()
        .unwrap_or_else(|| default_out_dir().join("model.nns"));
    create_parent(&out)?;
    fit.bundle
        .save(&out)
        .map_err(|e| CliError::from(e).context(out.display()))?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let report_path = out.with_file_name(format!("{stem}.train.json"));
    write_file(&report_path, serde_json::to_string_pretty(&fit.report)? + "\n")?;
    manifest.output(&out).output(&report_path).phase("write");
    manifest.write(&manifest_path_for(&out))?;

    let r = &fit.report;
    let label = match r.metric {
        Metric::Mse => "mse",
        Metric::ErrorRate => "error rate",
    };
    let test = r.test_metric.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
    println!(
        "trained {} epochs (best {}); train {label} {:.6}, test {label} {test}; model written to {}",
        r.stopped_epoch,
        r.best_epoch,
        r.train_metric,
        out.display()
    );
    Ok(())
}
