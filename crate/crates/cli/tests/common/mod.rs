#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::Value;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

/// Runs the CLI in-process and returns its exit status.
pub fn nnsens(args: &[&str]) -> i32 {
    let mut argv = vec!["nnsens".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    nn_sensitivity_cli::main_with_args(argv)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Validates `path` against `docs/schemas/<schema>.schema.json`; returns the
/// error messages.
pub fn schema_errors(schema: &str, path: &Path) -> Vec<String> {
    let schema_path = workspace_root()
        .join("docs/schemas")
        .join(format!("{schema}.schema.json"));
    let schema = read_json(&schema_path);
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let instance = read_json(path);
    let result = compiled.validate(&instance);
    match result {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{}: {e}", e.instance_path)).collect(),
    }
}

pub fn assert_valid(schema: &str, path: &Path) {
    let errors = schema_errors(schema, path);
    assert!(
        errors.is_empty(),
        "{} does not match {schema}: {errors:?}",
        path.display()
    );
}

/// A series where the target mostly depends on the current `a`, less on the
/// previous one, and not on `b`.
pub fn write_sequence_csv(path: &Path, rows: usize) {
    let mut text = String::from("a,b,y\n");
    let mut prev = 0.0;
    for t in 0..rows {
        let a = ((t as f64) * 0.7).sin() + 0.3 * ((t as f64) * 1.9).cos();
        let b = ((t as f64) * 0.23).cos();
        let y = a + 0.4 * prev;
        text.push_str(&format!("{a},{b},{y}\n"));
        prev = a;
    }
    std::fs::write(path, text).unwrap();
}

pub fn write_sequence_schema(path: &Path) {
    std::fs::write(
        path,
        r#"{"target": {"name": "y", "kind": "regression"},
            "columns": [{"name": "a", "kind": "numeric"}, {"name": "b", "kind": "numeric"}]}"#,
    )
    .unwrap();
}
