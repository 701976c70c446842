//! Pretrained concept vectors fused into the event encoding.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::{ModelError, Result};
use crate::data::Vocabulary;
use crate::rng::derive_rng;

/// One fixed (non-trainable) vector per type id. Types without a match in
/// the source table fall back to the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMap {
    d: usize,
    /// Indexed by type id - 1, in `1..=n_types` order.
    vectors: Vec<Vec<f32>>,
    /// Mean of the static pseudo-type vectors, used at the statics slot.
    static_mean: Vec<f32>,
}

impl ConceptMap {
    /// Deterministic stand-in vectors derived from each type name; used when
    /// no pretrained table is supplied so the fusion path always runs.
    pub fn synthetic(vocab: &Vocabulary, d: usize) -> Self {
        let scale = 1.0 / (d as f32).sqrt();
        let vectors = (1..=vocab.n_types())
            .map(|id| {
                let mut rng = derive_rng(0xC09CE97, vocab.type_name(id));
                (0..d).map(|_| (rng.gen::<f32>() - 0.5) * 2.0 * scale).collect()
            })
            .collect();
        Self::finish(vocab, d, vectors)
    }

    /// Loads `concept,v0,v1,...` rows and matches them to type names; rows
    /// for unknown concepts are ignored, unmatched types get zeros.
    pub fn load_csv(path: &Path, vocab: &Vocabulary, d: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| ModelError::BadConfig(format!("concept table: {e}")))?;
        let mut by_name: HashMap<String, Vec<f32>> = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| ModelError::BadConfig(format!("concept table: {e}")))?;
            if record.len() != d + 1 {
                return Err(ModelError::ConceptWidth { got: record.len().saturating_sub(1), expect: d });
            }
            let name = record[0].to_string();
            let values: std::result::Result<Vec<f32>, _> = (1..=d).map(|i| record[i].trim().parse::<f32>()).collect();
            let values = values.map_err(|e| ModelError::BadConfig(format!("concept table value: {e}")))?;
            by_name.insert(name, values);
        }
        let vectors = (1..=vocab.n_types())
            .map(|id| by_name.get(vocab.type_name(id)).cloned().unwrap_or_else(|| vec![0.0; d]))
            .collect();
        Ok(Self::finish(vocab, d, vectors))
    }

    fn finish(vocab: &Vocabulary, d: usize, vectors: Vec<Vec<f32>>) -> Self {
        let mut static_mean = vec![0.0f32; d];
        let n_cat = vocab.n_static_categories();
        for cat in 0..n_cat {
            let v = &vectors[vocab.static_type_id(cat) - 1];
            for (acc, &x) in static_mean.iter_mut().zip(v) {
                *acc += x / n_cat as f32;
            }
        }
        ConceptMap { d, vectors, static_mean }
    }

    pub fn width(&self) -> usize {
        self.d
    }

    /// Vector for a type id in `1..=n_types`.
    pub fn vector(&self, type_id: usize) -> &[f32] {
        &self.vectors[type_id - 1]
    }

    /// Vector used at the statics slot: the mean over static pseudo-types.
    pub fn static_vector(&self) -> &[f32] {
        &self.static_mean
    }
}
