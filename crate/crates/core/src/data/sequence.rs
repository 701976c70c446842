//! Per-patient event sequences assembled from the fact table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DataError, FactRow, PatientId, Result, Vocabulary};

/// One indicative event: a type id (vocabulary order) at a quarter index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub type_id: usize,
    pub t: f64,
}

/// One numeric measurement, kept raw; bucketization happens at encoding
/// time against whatever `BucketSpec` is in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericObs {
    pub concept: usize,
    pub value: f64,
    pub t: f64,
}

/// Level id per static category, aligned with the vocabulary's category
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticProfile {
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSequence {
    pub patient_id: PatientId,
    pub statics: StaticProfile,
    /// Sorted by `t`; same-quarter events keep their input-file order and
    /// zero-width gaps.
    pub events: Vec<Event>,
    /// Sorted by `t` with input order within a quarter, clipped to the last
    /// retained event time.
    pub numerics: Vec<NumericObs>,
    /// True when the raw record ran past the length cap.
    pub truncated: bool,
}

/// Retention window for indicative events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceLimits {
    /// Patients with fewer indicative events are excluded.
    pub min_events: usize,
    /// Longer records keep only their earliest `max_events` events.
    pub max_events: usize,
}

impl Default for SequenceLimits {
    fn default() -> Self {
        SequenceLimits { min_events: 32, max_events: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExclusionReason {
    TooFewEvents { found: usize },
    MissingStatic { category: String },
    ConflictingStatic { category: String },
}

impl std::fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExclusionReason::TooFewEvents { found } => write!(f, "too_few_events:{found}"),
            ExclusionReason::MissingStatic { category } => write!(f, "missing_static:{category}"),
            ExclusionReason::ConflictingStatic { category } => write!(f, "conflicting_static:{category}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub patient_id: PatientId,
    pub reason: ExclusionReason,
}

/// Sequences that passed the filters plus a per-patient exclusion log and
/// drop counts for rows whose concept is not in the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub sequences: Vec<PatientSequence>,
    pub exclusions: Vec<Exclusion>,
    pub unknown_concepts: BTreeMap<String, usize>,
}

/// Groups facts by patient and assembles filtered, ordered sequences.
/// Rows naming concepts outside the vocabulary are dropped and tallied.
pub fn build_sequences(facts: &[FactRow], vocab: &Vocabulary, limits: SequenceLimits) -> Result<BuildReport> {
    if limits.min_events == 0 || limits.max_events < limits.min_events {
        return Err(DataError::BadLimits { min: limits.min_events, max: limits.max_events });
    }

    let mut by_patient: BTreeMap<&str, Vec<&FactRow>> = BTreeMap::new();
    for fact in facts {
        by_patient.entry(fact.patient_id.as_str()).or_default().push(fact);
    }

    let mut sequences = Vec::new();
    let mut exclusions = Vec::new();
    let mut unknown_concepts: BTreeMap<String, usize> = BTreeMap::new();
    'patients: for (&patient_id, rows) in &by_patient {
        // One level per static category, observed exactly once.
        let mut levels: Vec<Option<usize>> = vec![None; vocab.n_static_categories()];
        let mut events: Vec<Event> = Vec::new();
        let mut numerics: Vec<NumericObs> = Vec::new();

        for row in rows {
            if let Some(cat) = static_category_of(vocab, &row.concept) {
                let (_, level) = row.concept.split_once(':').expect("static concepts carry a level");
                let Ok(level_id) = vocab.level_id(cat, level) else {
                    *unknown_concepts.entry(row.concept.clone()).or_default() += 1;
                    continue;
                };
                match levels[cat] {
                    None => levels[cat] = Some(level_id),
                    Some(existing) if existing == level_id => {}
                    Some(_) => {
                        exclusions.push(Exclusion {
                            patient_id: patient_id.into(),
                            reason: ExclusionReason::ConflictingStatic { category: vocab.static_category(cat).into() },
                        });
                        continue 'patients;
                    }
                }
                continue;
            }
            let t = row.interval as f64;
            match row.value {
                Some(value) => match vocab.numeric_id(&row.concept) {
                    Some(concept) => numerics.push(NumericObs { concept, value, t }),
                    None => *unknown_concepts.entry(row.concept.clone()).or_default() += 1,
                },
                None => match vocab.indicative_id(&row.concept) {
                    Some(type_id) => events.push(Event { type_id, t }),
                    None => *unknown_concepts.entry(row.concept.clone()).or_default() += 1,
                },
            }
        }

        for (cat, level) in levels.iter().enumerate() {
            if level.is_none() {
                exclusions.push(Exclusion {
                    patient_id: patient_id.into(),
                    reason: ExclusionReason::MissingStatic { category: vocab.static_category(cat).into() },
                });
                continue 'patients;
            }
        }
        if events.len() < limits.min_events {
            exclusions.push(Exclusion { patient_id: patient_id.into(), reason: ExclusionReason::TooFewEvents { found: events.len() } });
            continue;
        }

        // Stable sorts: within-quarter order stays as the rows arrived.
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        let truncated = events.len() > limits.max_events;
        events.truncate(limits.max_events);
        let horizon = events.last().unwrap().t;
        numerics.retain(|obs| obs.t <= horizon);
        numerics.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());

        sequences.push(PatientSequence {
            patient_id: patient_id.into(),
            statics: StaticProfile { levels: levels.into_iter().map(Option::unwrap).collect() },
            events,
            numerics,
            truncated,
        });
    }

    Ok(BuildReport { sequences, exclusions, unknown_concepts })
}

fn static_category_of(vocab: &Vocabulary, concept: &str) -> Option<usize> {
    concept.split_once(':').and_then(|(head, _)| vocab.category_index(head).ok())
}
