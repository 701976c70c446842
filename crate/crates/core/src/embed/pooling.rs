//! Pooling of an intensity grid into one propensity per event type.

use super::{EmbedError, IntensityGrid, Result};

/// Non-negative weights over prediction bins, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingWeights(Vec<f64>);

impl PoolingWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(EmbedError::Invalid("pooling weights are empty".into()));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(EmbedError::Invalid("pooling weights must be finite and non-negative".into()));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EmbedError::Invalid(format!("pooling weights sum to {total}, expected 1")));
        }
        Ok(PoolingWeights(w))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(EmbedError::Invalid("pooling weights are empty".into()));
        }
        Ok(PoolingWeights(vec![1.0 / n as f64; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Weighted sum of the grid's bins: one pooled value per type,
/// `phi_e = sum_i w_i P[e, i]`.
pub fn pool(grid: &IntensityGrid, weights: &PoolingWeights) -> Result<Vec<f64>> {
    if weights.len() != grid.n_bins() {
        return Err(EmbedError::Invalid(format!(
            "{} pooling weights for a grid with {} bins",
            weights.len(),
            grid.n_bins()
        )));
    }
    Ok((0..grid.n_types())
        .map(|e| grid.row(e).iter().zip(weights.as_slice()).map(|(p, w)| p * w).sum())
        .collect())
}
