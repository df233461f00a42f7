//! Artifact collection and the run manifest.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::format::json_bytes;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Everything a command produces, held in memory until the single write pass.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    /// Lines printed to stdout after the files are written.
    pub messages: Vec<String>,
    /// Set when results were produced but a fatal numeric condition was hit.
    pub numeric_failure: Option<String>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn say(&mut self, line: impl Into<String>) {
        self.messages.push(line.into());
    }
}

#[derive(Debug, Serialize)]
struct Artifact<'a> {
    file: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    parameters: &'a Value,
    artifacts: Vec<Artifact<'a>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Manifest bytes for a set of artifacts. Thread counts and paths of the
/// output directory are deliberately absent so reruns compare byte for byte.
pub fn manifest_bytes(command: &str, parameters: &Value, files: &[(String, Vec<u8>)]) -> Vec<u8> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        parameters,
        artifacts: files
            .iter()
            .map(|(name, bytes)| Artifact {
                file: name,
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };
    json_bytes(&manifest)
}

/// Writes every artifact and the manifest into `dir`.
pub fn write_all(dir: &Path, command: &str, parameters: &Value, outputs: &Outputs) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, bytes) in &outputs.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest_bytes(command, parameters, &outputs.files))
        .map_err(|e| CliError::io(&path, e))
}
