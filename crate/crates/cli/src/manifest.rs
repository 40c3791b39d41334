//! Provenance record written next to every artifact-producing run.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand name.
    pub command: String,
    /// Full argument vector as invoked.
    pub args: Vec<String>,
    /// Resolved settings after presets, config files and flags are merged.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    /// Wall-clock milliseconds per phase; the only field that varies between
    /// identical invocations.
    pub timings_ms: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok((digest.iter().map(|b| format!("{b:02x}")).collect(), bytes))
}

/// Accumulates a manifest while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    phase_start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: &[String]) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                args: args.to_vec(),
                config: serde_json::Value::Null,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timings_ms: BTreeMap::new(),
            },
            phase_start: Instant::now(),
        }
    }

    pub fn config(&mut self, config: impl Serialize) -> &mut Self {
        self.manifest.config = serde_json::to_value(config).expect("plain data");
        self
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.manifest.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> CliResult<&mut Self> {
        let (sha256, bytes) = sha256_file(path)?;
        self.manifest.inputs.push(InputFile {
            path: path.display().to_string(),
            sha256,
            bytes,
        });
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.display().to_string());
        self
    }

    /// Records the time since the previous phase ended under `name`.
    pub fn phase(&mut self, name: &str) -> &mut Self {
        let now = Instant::now();
        let ms = (now - self.phase_start).as_secs_f64() * 1e3;
        *self.manifest.timings_ms.entry(name.to_string()).or_insert(0.0) += ms;
        self.phase_start = now;
        self
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }
}

/// `dir/stem.manifest.json` for a primary output `dir/stem.ext`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    output.with_file_name(format!("{stem}.manifest.json"))
}
