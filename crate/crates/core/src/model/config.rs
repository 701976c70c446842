//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the attention stack.
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Width of the event-type embedding.
    pub d_type: usize,
    /// Width of the sinusoidal time encoding (even).
    pub d_time: usize,
    /// Width of the pretrained concept vectors.
    pub d_concept: usize,
    /// Width of the numeric-measurement substream.
    pub d_sub: usize,
    pub n_sub_layers: usize,
    pub n_sub_heads: usize,
    /// Hidden width of the intensity head.
    pub d_hidden: usize,
    /// Hard cap on encoded sequence length (events, excluding the statics
    /// slot).
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 2,
            n_layers: 5,
            d_type: 16,
            d_time: 8,
            d_concept: 16,
            d_sub: 16,
            n_sub_layers: 2,
            n_sub_heads: 2,
            d_hidden: 32,
            max_len: 64,
        }
    }
}

impl ModelConfig {
    /// Tiny configuration for numerically exhaustive tests.
    pub fn toy() -> Self {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_type: 4,
            d_time: 4,
            d_concept: 4,
            d_sub: 4,
            n_sub_layers: 1,
            n_sub_heads: 2,
            d_hidden: 8,
            max_len: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_hidden == 0 || self.max_len == 0 {
            return Err(ModelError::BadConfig("all widths and depths must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_model {} must divide evenly into {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.d_sub % self.n_sub_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_sub {} must divide evenly into {} heads",
                self.d_sub, self.n_sub_heads
            )));
        }
        if self.d_time % 2 != 0 || self.d_time == 0 {
            return Err(ModelError::BadConfig(format!("d_time {} must be even and positive", self.d_time)));
        }
        Ok(())
    }

    /// Width of a fused per-position summary row.
    pub fn d_summary(&self) -> usize {
        self.d_model + self.d_concept + self.d_sub
    }
}
