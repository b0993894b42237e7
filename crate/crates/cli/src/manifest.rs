//! Run manifests: resolved config plus checksums of everything touched.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CmdError;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    /// Global seed override, when given.
    pub seed_override: Option<u64>,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    /// Input path -> SHA-256 (hex).
    pub inputs: BTreeMap<String, String>,
    /// Output path -> SHA-256 (hex).
    pub outputs: BTreeMap<String, String>,
    pub duration_seconds: f64,
}

pub struct ManifestBuilder {
    command: &'static str,
    seed_override: Option<u64>,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &'static str, seed_override: Option<u64>) -> Self {
        Self {
            command,
            seed_override,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, config: impl Serialize) -> Result<(), CmdError> {
        self.config = serde_json::to_value(config)
            .map_err(|e| CmdError::Validation(format!("cannot serialize config: {e}")))?;
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CmdError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CmdError> {
        let digest = sha256_file(path)?;
        self.outputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Writes the manifest as `<file_name>` into `dir`.
    pub fn write(self, dir: &Path, file_name: &str) -> Result<PathBuf, CmdError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CmdError::Validation(format!("cannot create {}: {e}", dir.display())))?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed_override: self.seed_override,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = dir.join(file_name);
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CmdError::Validation(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| CmdError::Validation(format!("cannot write manifest: {e}")))?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CmdError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CmdError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
