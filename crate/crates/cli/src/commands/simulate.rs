use nn_sensitivity::data::{generate_synthetic, write_csv};
use serde_json::json;

use crate::args::SimulateArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, ManifestBuilder};
use crate::pipeline::{create_parent, default_out_dir, write_file};

pub fn run(args: &SimulateArgs, argv: &[String]) -> CliResult<()> {
    if args.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    if !(args.noise_sd >= 0.0 && args.noise_sd.is_finite()) {
        return Err(CliError::usage("--noise-sd must be a non-negative number"));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out_dir().join("synthetic.csv"));
    let mut manifest = ManifestBuilder::new("simulate", argv);
    manifest
        .config(json!({ "n": args.n, "noise_sd": args.noise_sd }))
        .seed("data", args.seed);
    let ds = generate_synthetic(args.n, args.noise_sd, args.seed);
    let mut bytes = Vec::new();
    write_csv(&ds, &mut bytes)?;
    manifest.phase("generate");
    create_parent(&out)?;
    write_file(&out, bytes)?;
    manifest.output(&out).phase("write");
    manifest.write(&manifest_path_for(&out))?;
    println!("wrote {} rows to {}", args.n, out.display());
    Ok(())
}
