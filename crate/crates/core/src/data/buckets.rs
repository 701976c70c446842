//! Quantile bucketization of numeric measurements.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Result, Vocabulary};

/// Five buckets per concept, cut at the 20/40/60/80th percentiles.
pub const N_BUCKETS: usize = 5;

const PERCENTILES: [f64; 4] = [20.0, 40.0, 60.0, 80.0];

/// Per-concept bucket boundaries, fit on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    /// Concept names in vocabulary order, recorded for safety checks.
    concepts: Vec<String>,
    /// Four ascending boundaries per concept.
    boundaries: Vec<[f64; 4]>,
}

impl BucketSpec {
    /// Fits boundaries from raw values grouped by numeric concept id
    /// (vocabulary order). Every concept needs at least five distinct
    /// values, otherwise the buckets would collapse.
    pub fn fit(vocab: &Vocabulary, values_by_concept: &[Vec<f64>]) -> Result<Self> {
        if values_by_concept.len() != vocab.n_numeric() {
            return Err(DataError::Invalid(format!(
                "expected values for {} numeric concepts, got {}",
                vocab.n_numeric(),
                values_by_concept.len()
            )));
        }
        let mut boundaries = Vec::with_capacity(values_by_concept.len());
        for (id, values) in values_by_concept.iter().enumerate() {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            let distinct = sorted.len();
            if distinct < N_BUCKETS {
                return Err(DataError::TooFewDistinct {
                    concept: vocab.numeric_names()[id].clone(),
                    found: distinct,
                    need: N_BUCKETS,
                });
            }
            let mut all = values.clone();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut cuts = [0.0f64; 4];
            for (i, &p) in PERCENTILES.iter().enumerate() {
                cuts[i] = percentile(&all, p);
            }
            boundaries.push(cuts);
        }
        Ok(BucketSpec { concepts: vocab.numeric_names().to_vec(), boundaries })
    }

    pub fn n_concepts(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self, concept: usize) -> &[f64; 4] {
        &self.boundaries[concept]
    }

    /// Bucket index in `0..5`: the number of boundaries at or below the
    /// value, so a value equal to a boundary falls in the bucket to its
    /// right.
    pub fn bucket(&self, concept: usize, value: f64) -> usize {
        self.boundaries[concept].iter().filter(|&&b| b <= value).count()
    }

    /// Token id for (concept, bucket) in the measurement token space;
    /// 0 is reserved for padding.
    pub fn token(&self, concept: usize, bucket: usize) -> usize {
        concept * N_BUCKETS + bucket + 1
    }

    /// Size of the measurement token space including padding.
    pub fn n_tokens(&self) -> usize {
        self.n_concepts() * N_BUCKETS + 1
    }

    /// Errors if the spec was fit against a different numeric vocabulary.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.concepts != vocab.numeric_names() {
            return Err(DataError::Invalid("bucket spec does not match the vocabulary's numeric concepts".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(DataError::Io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Linear-interpolation percentile on a sorted slice: rank
/// `h = (n-1) * p / 100`, interpolated between the straddling order
/// statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}
