use nn_sensitivity::explain::{select_features, ImportanceReport};

use crate::args::{ScopeArg, SelectArgs};
use crate::commands::explain::load_model;
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, ManifestBuilder};
use crate::pipeline::{
    compute_report, create_parent, default_out_dir, load_for_model, parse_selector, read_file, rows_for, write_file,
    ExplainRequest, Provenance,
};

pub fn run(args: &SelectArgs, argv: &[String]) -> CliResult<()> {
    let mut manifest = ManifestBuilder::new("select", argv);
    manifest.config(serde_json::json!({
        "threshold": args.threshold,
        "rows": format!("{:?}", args.rows).to_lowercase(),
        "encoded": args.encoded,
        "selector": args.selector,
    }));
    let report = match (&args.report, &args.model, &args.data) {
        (Some(path), _, _) => {
            manifest.input(path)?;
            ImportanceReport::from_json(&read_file(path)?).map_err(|e| CliError::from(e).context(path.display()))?
        }
        (None, Some(model), Some(data)) => {
            let bundle = load_model(model)?;
            manifest.input(model)?.input(data)?.seed("model", bundle.train_seed);
            let ds = load_for_model(&bundle, data, args.schema.as_deref())?;
            let rows = rows_for(&ds, args.rows)?;
            let request = ExplainRequest {
                scope: ScopeArg::Global,
                selector: parse_selector(args.selector.as_deref())?,
                group: !args.encoded,
                ..ExplainRequest::global()
            };
            let settings = Provenance::of(&bundle).map(|p| p.settings);
            compute_report(&bundle.model, &ds, &rows, &request, settings.as_ref())?
        }
        _ => return Err(CliError::usage("pass --report, or both --model and --data")),
    };
    manifest.phase("explain");
    let subset = select_features(&report, args.threshold)?;
    let out = args
        .out_subset
        .clone()
        .unwrap_or_else(|| default_out_dir().join("subset.json"));
    create_parent(&out)?;
    write_file(&out, subset.to_json() + "\n")?;
    manifest.output(&out).phase("write");
    manifest.write(&manifest_path_for(&out))?;
    println!(
        "selected {} of {} features covering {:.2}%: {}",
        subset.features.len(),
        subset.out_of,
        subset.cumulative,
        subset.names.join(", ")
    );
    Ok(())
}
