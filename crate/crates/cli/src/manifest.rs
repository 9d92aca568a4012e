use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Record of one run, written as JSON beside its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Option<PathBuf>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub seed: Option<u64>,
    /// Every setting after defaults, config file and flags were merged.
    pub settings: BTreeMap<String, String>,
    pub model_sha256: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
            settings: BTreeMap::new(),
            model_sha256: None,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.settings.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(path, json + "\n")
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
