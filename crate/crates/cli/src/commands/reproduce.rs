//! Whole-experiment reruns: per seed, train on all features, rank them,
//! select the top share, retrain on the selection, and tabulate test metrics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nn_sensitivity::data::{generate_synthetic, synthetic_schema, Dataset, Schema, Split, SYNTHETIC_NOISE_SD};
use nn_sensitivity::explain::{group_importance, select_features, ImportanceReport, Metric, Scope};
use nn_sensitivity::training::Metric as TrainMetric;
use nn_sensitivity::validation::{logistic_baseline_importance, true_importance_oracle, LassoConfig};
use serde::{Deserialize, Serialize};

use crate::args::{Experiment, FormatArg, ReproduceArgs};
use crate::commands::explain::write_report;
use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::pipeline::{
    compute_report, create_dir, default_out_dir, fit_model, load_data, load_schema, prepare, select_raw_columns,
    write_file, ExplainRequest, TrainSettings,
};
use crate::svg::bar_chart;

/// Seed of the synthetic dataset; every run trains on the same rows.
pub const SIM_DATA_SEED: u64 = 1;
pub const SIM_ROWS: usize = 10_000;
/// Features compared between the network ranking and the logistic baseline.
pub const BASELINE_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    /// Mean number of source features the models saw.
    pub features_mean: f64,
    pub mean: f64,
    /// Sample standard deviation over runs (0 for a single run).
    pub sd: f64,
    pub per_run: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub test_metric: f64,
    pub subset_test_metric: f64,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    /// Global importance of each source feature, in feature order.
    pub importance: Vec<f64>,
    /// Selected source features in ranking order.
    pub selected: Vec<String>,
    /// Size of the intersection of this run's top features and the baseline's.
    pub baseline_overlap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub lambda: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub n_draws: usize,
    /// Largest |mean network importance − oracle| over features, in percentage points.
    pub max_abs_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub top_k: usize,
    pub penalty: f64,
    /// Source features by decreasing absolute-coefficient share.
    pub ranking: Vec<String>,
    pub importance: Vec<f64>,
    pub overlap_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceSummary {
    pub experiment: String,
    pub runs: usize,
    pub base_seed: u64,
    pub threshold: f64,
    /// `mse` or `error_rate`.
    pub metric: String,
    pub data_rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Source features in column order; importance vectors follow it.
    pub features: Vec<String>,
    /// First row: all features; second row: after selection.
    pub table: Vec<MetricRow>,
    pub importance_mean: Vec<f64>,
    pub importance_sd: Vec<f64>,
    pub per_run: Vec<RunSummary>,
    pub oracle: Option<OracleComparison>,
    pub baseline: Option<BaselineComparison>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Context<'a> {
    raw: &'a Dataset,
    schema: &'a Schema,
    settings: TrainSettings,
    threshold: f64,
    out_dir: &'a Path,
    data_sha: Option<String>,
    baseline_top: Option<Vec<String>>,
}

fn top_names(report: &ImportanceReport, k: usize) -> Vec<String> {
    report.entries.iter().take(k).map(|e| e.name.clone()).collect()
}

fn run_once(ctx: &Context<'_>, index: usize, seed: u64) -> CliResult<RunSummary> {
    let dir = ctx.out_dir.join(format!("run-{:03}", index + 1));
    create_dir(&dir)?;
    let mut settings = ctx.settings.clone();
    settings.config.seed = seed;

    let fit = fit_model(ctx.raw, ctx.schema, &settings, None, ctx.data_sha.clone())?;
    fit.bundle.save(dir.join("model.nns"))?;
    write_file(
        &dir.join("model.train.json"),
        serde_json::to_string_pretty(&fit.report)? + "\n",
    )?;
    let rows = fit.dataset.rows_in(Split::Train);
    let request = ExplainRequest {
        group: true,
        ..ExplainRequest::global()
    };
    let report = compute_report(&fit.bundle.model, &fit.dataset, &rows, &request, Some(&settings))?;
    write_report(
        &report,
        &dir,
        "global_importance",
        &[FormatArg::Json, FormatArg::Csv, FormatArg::Svg],
        &format!("global importance, run {}", index + 1),
    )?;

    let subset = select_features(&report, ctx.threshold)?;
    write_file(&dir.join("subset.json"), subset.to_json() + "\n")?;
    let raw_subset = select_raw_columns(ctx.raw, &subset.names)?;
    let refit = fit_model(
        &raw_subset,
        ctx.schema,
        &settings,
        Some(subset.names.clone()),
        ctx.data_sha.clone(),
    )?;
    refit.bundle.save(dir.join("model_subset.nns"))?;
    write_file(
        &dir.join("model_subset.train.json"),
        serde_json::to_string_pretty(&refit.report)? + "\n",
    )?;

    let missing_test = || CliError::usage("the split left no test rows");
    let overlap = ctx
        .baseline_top
        .as_ref()
        .map(|top| top_names(&report, top.len()).iter().filter(|n| top.contains(n)).count());
    log::info!("run {} (seed {seed}) finished", index + 1);
    Ok(RunSummary {
        run: index + 1,
        seed,
        test_metric: fit.report.test_metric.ok_or_else(missing_test)?,
        subset_test_metric: refit.report.test_metric.ok_or_else(missing_test)?,
        stopped_epoch: fit.report.stopped_epoch,
        best_epoch: fit.report.best_epoch,
        importance: report.values_by_id(),
        selected: subset.names,
        baseline_overlap: overlap,
    })
}

/// Runs `0..runs` on `jobs` threads; results come back in run order.
fn run_all(ctx: &Context<'_>, runs: usize, base_seed: u64, jobs: usize) -> CliResult<Vec<RunSummary>> {
    let jobs = jobs.clamp(1, runs.max(1));
    if jobs == 1 {
        return (0..runs).map(|i| run_once(ctx, i, base_seed + i as u64)).collect();
    }
    let mut slots: Vec<Option<CliResult<RunSummary>>> = (0..runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                scope.spawn(move || {
                    (w..runs)
                        .step_by(jobs)
                        .map(|i| (i, run_once(ctx, i, base_seed + i as u64)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every run scheduled")).collect()
}

fn markdown(summary: &ReproduceSummary) -> String {
    let mut md = String::new();
    let (metric, scale, digits) = match summary.metric.as_str() {
        "error_rate" => ("test error (%)", 100.0, 2),
        _ => ("test MSE", 1.0, 5),
    };
    writeln!(md, "# {} experiment, {} run(s)\n", summary.experiment, summary.runs).unwrap();
    writeln!(md, "| model | features | {metric} mean ± sd |").unwrap();
    writeln!(md, "|---|---:|---:|").unwrap();
    for row in &summary.table {
        writeln!(
            md,
            "| {} | {:.1} | {:.digits$} ± {:.digits$} |",
            row.label,
            row.features_mean,
            row.mean * scale,
            row.sd * scale
        )
        .unwrap();
    }
    writeln!(md, "\n## Global importance (%), mean over runs\n").unwrap();
    match &summary.oracle {
        Some(o) => {
            writeln!(md, "| feature | network | sd | oracle | oracle SE | closed form |").unwrap();
            writeln!(md, "|---|---:|---:|---:|---:|---:|").unwrap();
            for j in 0..summary.features.len() {
                writeln!(
                    md,
                    "| {} | {:.2} | {:.2} | {:.2} | {:.3} | {:.2} |",
                    summary.features[j],
                    summary.importance_mean[j],
                    summary.importance_sd[j],
                    o.lambda[j],
                    o.standard_errors[j],
                    o.closed_form[j]
                )
                .unwrap();
            }
            writeln!(md, "\nLargest gap to the oracle: {:.2} points.", o.max_abs_difference).unwrap();
        }
        None => {
            let mut order: Vec<usize> = (0..summary.features.len()).collect();
            order.sort_by(|&a, &b| {
                summary.importance_mean[b]
                    .total_cmp(&summary.importance_mean[a])
                    .then(a.cmp(&b))
            });
            writeln!(md, "| rank | feature | network | sd |").unwrap();
            writeln!(md, "|---:|---|---:|---:|").unwrap();
            for (rank, &j) in order.iter().enumerate() {
                writeln!(
                    md,
                    "| {} | {} | {:.2} | {:.2} |",
                    rank + 1,
                    summary.features[j],
                    summary.importance_mean[j],
                    summary.importance_sd[j]
                )
                .unwrap();
            }
        }
    }
    if let Some(b) = &summary.baseline {
        writeln!(
            md,
            "\nLogistic baseline top {}: {}. Mean overlap with the network's top {}: {:.2}.",
            b.top_k,
            b.ranking.iter().take(b.top_k).cloned().collect::<Vec<_>>().join(", "),
            b.top_k,
            b.overlap_mean
        )
        .unwrap();
    }
    md
}

pub fn run(args: &ReproduceArgs, argv: &[String]) -> CliResult<()> {
    if args.runs == 0 {
        return Err(CliError::usage("--runs must be at least 1"));
    }
    let mut manifest = ManifestBuilder::new("reproduce", argv);
    let (raw, schema, mut settings, name) = match args.experiment {
        Experiment::Sim => (
            generate_synthetic(SIM_ROWS, SYNTHETIC_NOISE_SD, SIM_DATA_SEED),
            synthetic_schema(),
            TrainSettings::sim_regression(),
            "sim",
        ),
        Experiment::Credit => {
            let data = args
                .data
                .as_ref()
                .ok_or_else(|| CliError::usage("the credit experiment needs --data (see scripts/fetch_credit.py)"))?;
            let schema_path = args
                .schema
                .clone()
                .unwrap_or_else(|| PathBuf::from("data/credit_schema.json"));
            let schema = load_schema(&schema_path)?;
            let raw = load_data(data, &schema)?;
            manifest.input(&schema_path)?.input(data)?;
            (raw, schema, TrainSettings::credit_fcn(), "credit")
        }
    };
    if let Some(e) = args.epochs {
        settings.config.max_epochs = e;
    }
    settings.validate()?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| default_out_dir().join(format!("reproduce-{name}")));
    create_dir(&out_dir)?;
    manifest
        .config(serde_json::json!({
            "experiment": name,
            "runs": args.runs,
            "threshold": args.threshold,
            "oracle_draws": args.oracle_draws,
            "jobs": args.jobs,
            "settings": settings,
        }))
        .seed("base", args.seed)
        .seed("split", settings.split_seed);
    if args.experiment == Experiment::Sim {
        manifest.seed("data", SIM_DATA_SEED);
    }
    manifest.phase("load");

    let prepared = prepare(&raw, &settings)?;
    let baseline = match args.experiment {
        Experiment::Credit => {
            let config = LassoConfig::default();
            match logistic_baseline_importance(&prepared, &config) {
                Ok((report, _)) => {
                    let grouped = group_importance(&report, &prepared.group_map())?;
                    write_report(
                        &grouped,
                        &out_dir,
                        "baseline_importance",
                        &[FormatArg::Json, FormatArg::Svg],
                        "logistic baseline importance",
                    )?;
                    Some((grouped, config.penalty))
                }
                Err(e) => {
                    log::warn!("logistic baseline skipped: {e}");
                    None
                }
            }
        }
        Experiment::Sim => None,
    };
    manifest.phase("baseline");

    let ctx = Context {
        raw: &raw,
        schema: &schema,
        settings: settings.clone(),
        threshold: args.threshold,
        out_dir: &out_dir,
        data_sha: manifest.manifest().inputs.last().map(|i| i.sha256.clone()),
        baseline_top: baseline.as_ref().map(|(r, _)| top_names(r, BASELINE_TOP_K)),
    };
    let runs = run_all(&ctx, args.runs, args.seed, args.jobs)?;
    manifest.phase("runs");

    let features = raw.groups.clone();
    let p = features.len();
    let column = |f: &dyn Fn(&RunSummary) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let row = |label: &str, values: Vec<f64>, counts: Vec<f64>| {
        let (mean, sd) = mean_sd(&values);
        MetricRow {
            label: label.to_string(),
            features_mean: mean_sd(&counts).0,
            mean,
            sd,
            per_run: values,
        }
    };
    let table = vec![
        row("all features", column(&|r| r.test_metric), vec![p as f64; runs.len()]),
        row(
            &format!("selected ({}%)", args.threshold),
            column(&|r| r.subset_test_metric),
            column(&|r| r.selected.len() as f64),
        ),
    ];
    let (importance_mean, importance_sd): (Vec<f64>, Vec<f64>) =
        (0..p).map(|j| mean_sd(&column(&|r| r.importance[j]))).unzip();

    let oracle = match args.experiment {
        Experiment::Sim => {
            let o = true_importance_oracle(args.oracle_draws, args.seed)?;
            let max_abs_difference = importance_mean
                .iter()
                .zip(&o.lambda)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            write_file(&out_dir.join("oracle.json"), serde_json::to_string_pretty(&o)? + "\n")?;
            Some(OracleComparison {
                lambda: o.lambda,
                standard_errors: o.standard_errors,
                closed_form: o.closed_form,
                n_draws: o.n_draws,
                max_abs_difference,
            })
        }
        Experiment::Credit => None,
    };
    let baseline = baseline.map(|(r, penalty)| BaselineComparison {
        top_k: BASELINE_TOP_K,
        penalty,
        ranking: r.entries.iter().map(|e| e.name.clone()).collect(),
        importance: r.values_by_id(),
        overlap_mean: mean_sd(&column(&|s| s.baseline_overlap.unwrap_or(0) as f64)).0,
    });
    let metric = match runs_metric(&prepared) {
        TrainMetric::Mse => "mse",
        TrainMetric::ErrorRate => "error_rate",
    };
    let summary = ReproduceSummary {
        experiment: name.to_string(),
        runs: args.runs,
        base_seed: args.seed,
        threshold: args.threshold,
        metric: metric.to_string(),
        data_rows: raw.n_rows(),
        train_rows: prepared.rows_in(Split::Train).len(),
        test_rows: prepared.rows_in(Split::Test).len(),
        features: features.clone(),
        table,
        importance_mean: importance_mean.clone(),
        importance_sd,
        per_run: runs,
        oracle,
        baseline,
    };

    // Mean percentages already sum to 100, so renormalizing leaves them as is.
    let mean_report = ImportanceReport::from_raw(Scope::Global, Metric::Iid, features, importance_mean, summary.runs)?;
    let chart = bar_chart(
        &mean_report,
        &format!("global importance, mean of {} run(s)", summary.runs),
    );
    let summary_path = out_dir.join("summary.json");
    let md_path = out_dir.join("summary.md");
    let chart_path = out_dir.join("global_importance_mean.svg");
    write_file(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    let md = markdown(&summary);
    write_file(&md_path, &md)?;
    write_file(&chart_path, chart)?;
    manifest.output(&summary_path).output(&md_path).output(&chart_path);
    for r in &summary.per_run {
        manifest.output(&out_dir.join(format!("run-{:03}", r.run)));
    }
    manifest.phase("write");
    manifest.write(&out_dir.join("manifest.json"))?;
    print!("{md}");
    Ok(())
}

fn runs_metric(ds: &Dataset) -> TrainMetric {
    match ds.n_classes() {
        Some(_) => TrainMetric::ErrorRate,
        None => TrainMetric::Mse,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_sd() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
