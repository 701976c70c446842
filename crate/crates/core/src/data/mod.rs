//! Fact-table ingestion: vocabulary construction, quarter binning, numeric
//! bucketization, per-patient sequence assembly, and cohort splits.

mod buckets;
mod facts;
mod sequence;
mod split;
mod vocab;

pub use buckets::{BucketSpec, N_BUCKETS};
pub use facts::{bin_timestamp, read_facts, write_facts, FactRow, QuarterEpoch};
pub use sequence::{build_sequences, BuildReport, Event, Exclusion, ExclusionReason, NumericObs, PatientSequence, SequenceLimits, StaticProfile};
pub use split::{split_patients, Split};
pub use vocab::{Vocabulary, STATIC_CATEGORIES};

use thiserror::Error;

/// Opaque patient identifier, carried through verbatim from the input feed.
pub type PatientId = String;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("date {date} predates the binning epoch {epoch}")]
    DateBeforeEpoch { date: chrono::NaiveDate, epoch: QuarterEpoch },
    #[error("unparseable date {0:?}")]
    BadDate(String),
    #[error("concept {0:?} appears both with and without a value")]
    MixedConcept(String),
    #[error("static fact {0:?} has no level suffix")]
    BareStatic(String),
    #[error("numeric concept {concept:?} has {found} distinct values; bucket fitting needs at least {need}")]
    TooFewDistinct { concept: String, found: usize, need: usize },
    #[error("concept {0:?} is not in the vocabulary")]
    UnknownConcept(String),
    #[error("static category {0:?} is not in the vocabulary")]
    UnknownStatic(String),
    #[error("level {level:?} is not in the vocabulary for static {category:?}")]
    UnknownLevel { category: String, level: String },
    #[error("split fractions {0:?} must be positive and sum to 1")]
    BadFractions(Vec<f64>),
    #[error("sequence limits min {min} / max {max} are inconsistent")]
    BadLimits { min: usize, max: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
