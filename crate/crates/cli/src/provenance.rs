//! Per-run provenance record: the subcommand, resolved settings, seed,
//! code version, and a digest of every input file — enough to re-run
//! the command and get byte-identical outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// The settings the run actually used, after flag overrides.
    pub config: serde_json::Value,
    /// SHA-256 per input path.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Provenance {
        Provenance {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading input {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), format!("{:x}", Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("provenance.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
