//! Fixed-length patient vectors built from rollout step vectors: global
//! rescale, per-vector rescale, average, then drop static dimensions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Result};
use crate::data::{PatientId, Vocabulary};

/// Rollout steps feeding one embedding.
pub const EMBED_STEPS: usize = 6;

/// Normalization range shared by every patient in a batch, persisted so a
/// run can be reproduced or extended without recomputing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub min: f64,
    pub max: f64,
}

impl Extrema {
    /// Smallest and largest entry across every vector of every patient.
    pub fn from_vectors<'a, I>(vectors: I) -> Result<Extrema>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut seen = false;
        for v in vectors {
            for &x in v {
                if !x.is_finite() {
                    return Err(EmbedError::Invalid(format!("non-finite intensity {x} in an embedding batch")));
                }
                min = min.min(x);
                max = max.max(x);
                seen = true;
            }
        }
        if !seen {
            return Err(EmbedError::Invalid("no values to take extrema over".into()));
        }
        Ok(Extrema { min, max })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientEmbedding {
    pub patient_id: PatientId,
    pub index_interval: u32,
    /// One entry in `[0,1]` per indicative concept, vocabulary order.
    pub values: Vec<f64>,
}

/// Concept names for the embedding coordinates, in output order.
pub fn embedding_concepts(vocab: &Vocabulary) -> Vec<String> {
    (1..=vocab.n_types())
        .filter(|&id| !vocab.is_static_type(id))
        .map(|id| vocab.type_name(id).to_string())
        .collect()
}

/// Collapses six per-step type vectors into one patient vector.
///
/// Entries are rescaled to `[0,1]` with the batch-wide `extrema` (clamped,
/// since persisted extrema may be reused on patients outside the original
/// batch), each step vector is rescaled to `[0,1]` on its own range, the
/// six are averaged elementwise, and static pseudo-type dimensions are
/// dropped. A step vector whose range is a single point contributes zeros.
pub fn build_embedding(steps: &[Vec<f64>], extrema: Extrema, vocab: &Vocabulary) -> Result<Vec<f64>> {
    if steps.len() != EMBED_STEPS {
        return Err(EmbedError::Invalid(format!("expected {EMBED_STEPS} step vectors, got {}", steps.len())));
    }
    let width = vocab.n_types();
    for (i, v) in steps.iter().enumerate() {
        if v.len() != width {
            return Err(EmbedError::Invalid(format!(
                "step vector {i} has {} entries, vocabulary has {width} types",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Invalid(format!("step vector {i} contains a non-finite entry")));
        }
    }

    let global_span = extrema.max - extrema.min;
    let rescaled: Vec<Vec<f64>> = steps
        .iter()
        .map(|v| {
            let global: Vec<f64> = if global_span > 0.0 {
                v.iter().map(|&x| ((x - extrema.min) / global_span).clamp(0.0, 1.0)).collect()
            } else {
                vec![0.0; width]
            };
            let lo = global.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = global.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            if span > 0.0 {
                global.iter().map(|&x| (x - lo) / span).collect()
            } else {
                vec![0.0; width]
            }
        })
        .collect();

    let mut mean = vec![0.0; width];
    for v in &rescaled {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= EMBED_STEPS as f64);

    Ok(mean
        .into_iter()
        .enumerate()
        .filter(|(k, _)| !vocab.is_static_type(k + 1))
        .map(|(_, x)| x)
        .collect())
}

/// Writes embeddings with one named column per concept.
pub fn write_embeddings(path: &Path, vocab: &Vocabulary, rows: &[PatientEmbedding]) -> Result<()> {
    let concepts = embedding_concepts(vocab);
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["patient_id".to_string(), "index_interval".to_string()];
    header.extend(concepts.iter().cloned());
    writer.write_record(&header)?;
    for row in rows {
        if row.values.len() != concepts.len() {
            return Err(EmbedError::Invalid(format!(
                "patient {} has {} coordinates, header names {}",
                row.patient_id,
                row.values.len(),
                concepts.len()
            )));
        }
        let mut record = vec![row.patient_id.clone(), row.index_interval.to_string()];
        record.extend(row.values.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads an embeddings file back as its concept names plus one row per
/// patient.
pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Vec<PatientEmbedding>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "patient_id" || &headers[1] != "index_interval" {
        return Err(EmbedError::Invalid(format!(
            "embeddings header must start with patient_id,index_interval; got {:?}",
            headers.iter().take(2).collect::<Vec<_>>()
        )));
    }
    let concepts: Vec<String> = headers.iter().skip(2).map(|h| h.to_string()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |field: &str, what: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|_| EmbedError::Invalid(format!("line {line}: bad {what} {field:?}")))
        };
        let index_interval = record[1]
            .parse::<u32>()
            .map_err(|_| EmbedError::Invalid(format!("line {line}: bad index_interval {:?}", &record[1])))?;
        let values = record
            .iter()
            .skip(2)
            .map(|f| parse(f, "coordinate"))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(PatientEmbedding { patient_id: record[0].to_string(), index_interval, values });
    }
    Ok((concepts, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FactRow;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn vocab_with(n_indicative: usize) -> Vocabulary {
        let mk = |c: &str| FactRow { patient_id: "1".into(), interval: 0, concept: c.into(), value: None };
        let mut facts: Vec<FactRow> = (0..n_indicative).map(|i| mk(&format!("c{i:02}"))).collect();
        facts.push(mk("gender:f"));
        facts.push(mk("race:w"));
        facts.push(mk("pseudo_age:40s"));
        Vocabulary::from_facts(&facts).unwrap()
    }

    #[test]
    fn sixty_five_types_give_sixty_two_named_coordinates() {
        let vocab = vocab_with(62);
        assert_eq!(vocab.n_types(), 65);
        let mut rng = derive_rng(8, "embed-62");
        let steps: Vec<Vec<f64>> =
            (0..EMBED_STEPS).map(|_| (0..65).map(|_| rng.gen::<f64>()).collect()).collect();
        let extrema = Extrema::from_vectors(steps.iter().map(|v| v.as_slice())).unwrap();
        let phi = build_embedding(&steps, extrema, &vocab).unwrap();
        assert_eq!(phi.len(), 62);
        assert!(phi.iter().all(|&x| (0.0..=1.0).contains(&x)));

        let names = embedding_concepts(&vocab);
        assert_eq!(names.len(), 62);
        assert_eq!(names, vocab.indicative_names());
    }

    #[test]
    fn six_identical_one_hots_survive_unchanged() {
        let vocab = vocab_with(3);
        let hot = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let steps = vec![hot; EMBED_STEPS];
        let extrema = Extrema::from_vectors(steps.iter().map(|v| v.as_slice())).unwrap();
        let phi = build_embedding(&steps, extrema, &vocab).unwrap();
        assert_eq!(phi, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_vectors_collapse_to_zero() {
        let vocab = vocab_with(2);
        let steps: Vec<Vec<f64>> = (0..EMBED_STEPS).map(|i| vec![0.1 * (i + 1) as f64; 5]).collect();
        let extrema = Extrema::from_vectors(steps.iter().map(|v| v.as_slice())).unwrap();
        // Every vector is flat, so the per-vector rescale hits its
        // degenerate rule even though the global range is wide.
        assert_eq!(build_embedding(&steps, extrema, &vocab).unwrap(), vec![0.0, 0.0]);

        let flat = vec![vec![0.7; 5]; EMBED_STEPS];
        let extrema = Extrema::from_vectors(flat.iter().map(|v| v.as_slice())).unwrap();
        assert_eq!(extrema, Extrema { min: 0.7, max: 0.7 });
        assert_eq!(build_embedding(&flat, extrema, &vocab).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn ranks_inside_a_vector_survive_the_rescales() {
        let argsort = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            idx
        };
        let vocab = vocab_with(4);
        let mut rng = derive_rng(13, "embed-ranks");
        for _ in 0..100 {
            let v: Vec<f64> = (0..7).map(|_| rng.gen::<f64>()).collect();
            let steps = vec![v.clone(); EMBED_STEPS];
            let extrema = Extrema::from_vectors(steps.iter().map(|s| s.as_slice())).unwrap();
            let phi = build_embedding(&steps, extrema, &vocab).unwrap();
            assert!(phi.iter().all(|&x| (0.0..=1.0).contains(&x)));
            assert_eq!(argsort(&phi), argsort(&v[..4]), "indicative ranks changed");
        }
    }

    #[test]
    fn malformed_batches_are_rejected() {
        let vocab = vocab_with(2);
        let good = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5]; EMBED_STEPS];
        let extrema = Extrema::from_vectors(good.iter().map(|v| v.as_slice())).unwrap();

        assert!(build_embedding(&good[..5], extrema, &vocab).is_err());
        let narrow = vec![vec![0.1; 4]; EMBED_STEPS];
        assert!(build_embedding(&narrow, extrema, &vocab).is_err());
        let mut poisoned = good.clone();
        poisoned[3][1] = f64::NAN;
        assert!(build_embedding(&poisoned, extrema, &vocab).is_err());

        assert!(Extrema::from_vectors(std::iter::empty()).is_err());
        assert!(Extrema::from_vectors([vec![1.0, f64::INFINITY]].iter().map(|v| v.as_slice())).is_err());
    }

    #[test]
    fn extrema_persist_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extrema.json");
        let extrema = Extrema { min: -0.25, max: 3.5 };
        extrema.save(&path).unwrap();
        assert_eq!(Extrema::load(&path).unwrap(), extrema);
    }

    #[test]
    fn embeddings_round_trip_through_csv() {
        let vocab = vocab_with(3);
        let rows = vec![
            PatientEmbedding { patient_id: "7".into(), index_interval: 20, values: vec![0.0, 0.5, 1.0] },
            PatientEmbedding { patient_id: "8".into(), index_interval: 21, values: vec![0.25, 0.125, 0.625] },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.csv");
        write_embeddings(&path, &vocab, &rows).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("patient_id,index_interval,c00,c01,c02\n"));

        let (concepts, back) = read_embeddings(&path).unwrap();
        assert_eq!(concepts, vocab.indicative_names());
        assert_eq!(back, rows);

        let wide = vec![PatientEmbedding { patient_id: "9".into(), index_interval: 0, values: vec![0.1; 4] }];
        assert!(write_embeddings(&path, &vocab, &wide).is_err());
    }
}
