use nn_sensitivity::validation::{gradient_check_trials, model_gradient_check};

use crate::args::GradcheckArgs;
use crate::commands::explain::load_model;
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, ManifestBuilder};
use crate::pipeline::{create_parent, write_file};

pub fn run(args: &GradcheckArgs, argv: &[String]) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let mut manifest = ManifestBuilder::new("gradcheck", argv);
    manifest
        .config(serde_json::json!({ "trials": args.trials }))
        .seed("trials", args.seed);
    let summary = match &args.model {
        Some(path) => {
            let bundle = load_model(path)?;
            manifest.input(path)?;
            model_gradient_check(&bundle.model, args.seed, args.trials)
        }
        None => gradient_check_trials(args.seed, args.trials),
    };
    manifest.phase("check");
    println!("{}", summary.summary_line());
    if let Some(out) = &args.out {
        create_parent(out)?;
        write_file(out, serde_json::to_string_pretty(&summary)? + "\n")?;
        manifest.output(out).phase("write");
        manifest.write(&manifest_path_for(out))?;
    }
    if !summary.all_passed() {
        return Err(CliError::numeric("gradient check failed"));
    }
    Ok(())
}
