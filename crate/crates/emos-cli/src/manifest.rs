//! Reproducibility manifests.
//!
//! Every subcommand drops a `manifest.json` (or `<out>.manifest.json` for
//! single-file outputs) recording the effective configuration, sha256
//! digests of all inputs, the root seed, and the software version — enough
//! to rerun the command and get byte-identical outputs. The wall-clock
//! field is informational and the one part that varies between reruns, so
//! determinism checks compare everything except the manifests.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// Subcommand that produced the outputs next to this file.
    pub command: String,
    /// Effective configuration after defaults were applied.
    pub config: serde_json::Value,
    /// sha256 digest of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    /// Root seed all randomness flows from, when the command uses any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub software_version: String,
    /// Wall-clock runtime in milliseconds; informational only.
    pub wall_ms: u128,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            seed: None,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_ms: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = digest_file(path)
            .with_context(|| format!("digesting input {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)
            .with_context(|| format!("writing manifest {}", path.display()))
    }
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
