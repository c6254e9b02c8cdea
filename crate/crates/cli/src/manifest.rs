use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to every set of output files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_path: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    pub parameters: serde_json::Value,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, scenario_path: &Path, scenario_text: &str, seed: u64, parameters: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            scenario_path: scenario_path.display().to_string(),
            scenario_sha256: sha256_hex(scenario_text.as_bytes()),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            parameters,
            outputs: Vec::new(),
        }
    }

    /// Writes `bytes` to `dir/name` and records its hash.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn save(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
