//! Run manifests written next to every output file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "shg";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// sha256 over the version, command and resolved parameters.
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Everything the outputs depend on besides input file contents.
    pub parameters: serde_json::Value,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sidecar path: `out.json` gets `out.json.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Collects inputs while a command runs.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    started: u64,
    inputs: Vec<InputFile>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Recorder {
            command: command.to_string(),
            started: now_ms(),
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn finish(self, seed: Option<u64>, parameters: serde_json::Value, outputs: Vec<PathBuf>) -> RunManifest {
        let mut hasher = Sha256::new();
        hasher.update(VERSION.as_bytes());
        hasher.update(self.command.as_bytes());
        hasher.update(parameters.to_string().as_bytes());
        for i in &self.inputs {
            hasher.update(i.sha256.as_bytes());
        }
        RunManifest {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: self.command,
            config_hash: hex::encode(hasher.finalize()),
            seed,
            parameters,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
            inputs: self.inputs,
            outputs,
        }
    }
}

pub fn write(manifest: &RunManifest, out: &Path) -> Result<PathBuf> {
    let path = manifest_path(out);
    let doc = serde_json::to_string_pretty(manifest)? + "\n";
    std::fs::write(&path, doc).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
