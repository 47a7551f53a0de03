use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Git-style object id: SHA-256 over `blob <len>\0<content>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(blob_hash(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

/// Replay record written next to every command's artifacts.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(command: &str, seed: u64, config_json: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            config_hash: sha256_hex(config_json.as_bytes()),
            config: serde_json::from_str(config_json).expect("valid json"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, root: &Path, path: &Path) -> Result<()> {
        self.inputs.insert(relative(root, path), file_hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, root: &Path, path: &Path) -> Result<()> {
        self.outputs.insert(relative(root, path), file_hash(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}
