//! Experiment manifests: enough metadata to reproduce a run byte for byte.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ExperimentManifest {
    pub format: String,
    pub version: u32,
    pub library_version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    /// SHA-256 of every input file.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub wall_clock_ms: u128,
}

pub struct ManifestBuilder {
    command: String,
    parameters: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            parameters,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.inputs
            .insert(path.display().to_string(), hex_digest(&bytes));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(self) -> ExperimentManifest {
        ExperimentManifest {
            format: "mixflow/manifest".into(),
            version: 1,
            library_version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            parameters: self.parameters,
            input_hashes: self.inputs,
            outputs: self.outputs,
            wall_clock_ms: self.started.elapsed().as_millis(),
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
