use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use untethered_core::model::{key_path, ConfigError};
use untethered_core::{load_config, Config};

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Stage { .. } => 4,
        }
    }

    pub fn stage(stage: &'static str, message: impl ToString) -> Self {
        CliError::Stage { stage, message: message.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Validation(v) => CliError::Validation(v.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

pub fn read_config(path: Option<&Path>, lenient: bool) -> Result<(Config, Vec<u8>), CliError> {
    let path = path.ok_or_else(|| CliError::Parse("--config is required for this command".into()))?;
    let bytes = fs::read(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let config = load_config(path, lenient)?;
    Ok((config, bytes))
}

/// Reads a JSON document, rejecting unknown keys unless `lenient`.
pub fn read_json<T: DeserializeOwned>(path: &Path, lenient: bool) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(&text);
    let value: T = serde_ignored::deserialize(&mut de, |p| unknown.push(key_path(&p)))
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    de.end().map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if !lenient && !unknown.is_empty() {
        return Err(CliError::Parse(format!("{}: unknown keys: {}", path.display(), unknown.join(", "))));
    }
    Ok(value)
}

/// Collects written files (relative to the output directory) for the manifest.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::stage("output", format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    /// `explicit` wins over `dir/default_name`.
    pub fn path(&self, explicit: Option<&Path>, default_name: &str) -> PathBuf {
        explicit.map_or_else(|| self.dir.join(default_name), Path::to_path_buf)
    }

    fn record(&mut self, path: &Path) {
        let shown = path.strip_prefix(&self.dir).unwrap_or(path);
        self.written.push(shown.display().to_string());
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::stage("output", e))?;
        text.push('\n');
        self.write_bytes(path, text.as_bytes())
    }

    pub fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::stage("output", format!("{}: {e}", parent.display())))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::stage("output", format!("{}: {e}", path.display())))?;
        self.record(path);
        Ok(())
    }

    pub fn into_files(self) -> Vec<String> {
        self.written
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the config file bytes; empty when no config was used.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<String>,
    /// Unix seconds; the only field that varies between identical runs.
    pub timestamp: u64,
}

pub fn config_hash(bytes: Option<&[u8]>) -> String {
    bytes.map(|b| hex::encode(Sha256::digest(b))).unwrap_or_default()
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::stage("output", e))?;
    text.push('\n');
    fs::create_dir_all(dir).map_err(|e| CliError::stage("output", e))?;
    fs::write(dir.join("manifest.json"), text).map_err(|e| CliError::stage("output", e))
}
