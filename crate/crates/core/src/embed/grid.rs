//! The per-type, per-prediction-bin intensity matrix produced by rollout.

use serde::{Deserialize, Serialize};

use super::{EmbedError, Result};

/// `n_types x n_bins` matrix of normalized intensities: column `i` is the
/// per-type distribution at the `i`-th predicted event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    n_types: usize,
    /// Row-major `[n_types, n_bins]`.
    values: Vec<f64>,
    /// Absolute time of each prediction bin.
    bin_times: Vec<f64>,
}

impl IntensityGrid {
    /// Assembles a grid from per-bin columns, each of length `n_types`.
    pub fn from_columns(columns: &[Vec<f64>], bin_times: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(EmbedError::Invalid("intensity grid needs at least one bin".into()));
        }
        if columns.len() != bin_times.len() {
            return Err(EmbedError::Invalid(format!(
                "{} grid columns but {} bin times",
                columns.len(),
                bin_times.len()
            )));
        }
        let n_types = columns[0].len();
        if n_types == 0 || columns.iter().any(|c| c.len() != n_types) {
            return Err(EmbedError::Invalid("grid columns must share a positive length".into()));
        }
        for (i, column) in columns.iter().enumerate() {
            for &v in column {
                if !(0.0..=1.0).contains(&v) {
                    return Err(EmbedError::Invalid(format!("grid entry {v} in bin {i} is outside [0, 1]")));
                }
            }
        }
        let n_bins = columns.len();
        let mut values = vec![0.0; n_types * n_bins];
        for (i, column) in columns.iter().enumerate() {
            for (e, &v) in column.iter().enumerate() {
                values[e * n_bins + i] = v;
            }
        }
        Ok(IntensityGrid { n_types, values, bin_times })
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn n_bins(&self) -> usize {
        self.bin_times.len()
    }

    pub fn bin_times(&self) -> &[f64] {
        &self.bin_times
    }

    pub fn get(&self, type_index: usize, bin: usize) -> f64 {
        self.values[type_index * self.n_bins() + bin]
    }

    /// All bins for one type.
    pub fn row(&self, type_index: usize) -> &[f64] {
        let n = self.n_bins();
        &self.values[type_index * n..(type_index + 1) * n]
    }

    pub fn column(&self, bin: usize) -> Vec<f64> {
        (0..self.n_types).map(|e| self.get(e, bin)).collect()
    }
}
