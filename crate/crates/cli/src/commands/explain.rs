use std::path::Path;

use nn_sensitivity::explain::ImportanceReport;
use nn_sensitivity::models::ModelBundle;

use crate::args::{ExplainArgs, FormatArg, ScopeArg};
use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::pipeline::{
    compute_report, create_dir, default_out_dir, load_for_model, parse_selector, rows_for, write_file, ExplainRequest,
    Provenance,
};
use crate::svg::bar_chart;

pub fn load_model(path: &Path) -> CliResult<ModelBundle> {
    ModelBundle::load(path).map_err(|e| CliError::from(e).context(path.display()))
}

/// Writes `report` as `dir/stem.<ext>` for each format and returns the paths.
pub fn write_report(
    report: &ImportanceReport,
    dir: &Path,
    stem: &str,
    formats: &[FormatArg],
    title: &str,
) -> CliResult<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for &format in formats {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        if written.contains(&path) {
            continue;
        }
        let body = match format {
            FormatArg::Json => report.to_json() + "\n",
            FormatArg::Csv => report.to_csv(),
            FormatArg::Svg => bar_chart(report, title),
            FormatArg::Text => report.to_text(),
        };
        write_file(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

fn scope_name(scope: ScopeArg) -> &'static str {
    match scope {
        ScopeArg::Global => "global",
        ScopeArg::Local => "local",
        ScopeArg::Lag => "lag",
    }
}

pub fn run(args: &ExplainArgs, argv: &[String]) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("explain", argv);
    let request = ExplainRequest {
        scope: args.scope,
        sample_id: args.sample_id,
        selector: parse_selector(args.selector.as_deref())?,
        raw_units: args.raw_units,
        group: args.group,
        all_lags: args.all_lags,
    };
    let bundle = load_model(&args.model)?;
    manifest.input(&args.model)?.input(&args.data)?;
    if let Some(s) = &args.schema {
        manifest.input(s)?;
    }
    let ds = load_for_model(&bundle, &args.data, args.schema.as_deref())?;
    let rows = rows_for(&ds, args.rows)?;
    manifest
        .config(serde_json::json!({
            "scope": scope_name(args.scope),
            "sample_id": args.sample_id,
            "rows": format!("{:?}", args.rows).to_lowercase(),
            "selector": args.selector,
            "raw_units": args.raw_units,
            "group": args.group,
            "all_lags": args.all_lags,
        }))
        .seed("model", bundle.train_seed)
        .phase("load");
    let settings = Provenance::of(&bundle).map(|p| p.settings);
    let report = compute_report(&bundle.model, &ds, &rows, &request, settings.as_ref())?;
    manifest.phase("explain");

    let dir = args.out_dir.clone().unwrap_or_else(default_out_dir);
    let stem = args
        .name
        .clone()
        .unwrap_or_else(|| format!("{}_importance", scope_name(args.scope)));
    create_dir(&dir)?;
    let title = format!("{} importance", report.scope.label());
    for path in write_report(&report, &dir, &stem, &args.format, &title)? {
        manifest.output(&path);
    }
    manifest.phase("write");
    manifest.write(&dir.join(format!("{stem}.manifest.json")))?;
    print!("{}", report.to_text());
    Ok(())
}
