//! Settings file shared by every subcommand: UTF-8 JSON with one
//! optional section per pipeline stage. Command-line flags override
//! whatever the file sets.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Root seed; every stage derives its named substreams from it.
    pub seed: Option<u64>,
    /// Synthetic cohort generation settings.
    pub cohort: Option<Value>,
    /// Sequence retention window for `prep`.
    pub limits: Option<Value>,
    /// Train/validation/test fractions for the patient split.
    pub split_fractions: Option<(f64, f64, f64)>,
    /// Intensity model architecture.
    pub model: Option<Value>,
    /// Optimization settings.
    pub train: Option<Value>,
    /// Events scored at the end of each held-out sequence.
    pub horizon: Option<usize>,
    /// Mix between lasso (1) and ridge (0) for the sparse outcome head.
    pub l1_ratio: Option<f64>,
    /// Permutation test iterations.
    pub iters: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Resolved root seed: the `--seed` flag beats the file, the file
    /// beats the default of 0.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}

/// Materializes one config section, falling back to the type's default
/// when the file has no such section.
pub fn section<T>(value: &Option<Value>, name: &str) -> Result<T>
where
    T: DeserializeOwned + Default,
{
    match value {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone())
            .with_context(|| format!("config section `{name}`")),
    }
}
