//! Attention-based conditional intensity model over patient sequences.
//!
//! A sequence enters as embedded events (type + time + concept vector) with
//! the static attributes injected at position 0; a causal self-attention
//! stack produces per-position summaries; a parallel substream attends over
//! bucketized numeric measurements and is joined to each position by
//! last-value-carried-forward; the intensity head maps a position summary
//! plus a query-time encoding to one non-negative intensity per event type.

mod concepts;
mod config;
mod encoder;
mod intensity;
mod params;
mod timeenc;

pub use concepts::ConceptMap;
pub use config::ModelConfig;
pub use encoder::{encode_history, EncodedHistory, EncoderContext};
pub use intensity::{head_weights, intensities_at, intensities_f64, intensity_at, HeadWeights};
pub use params::{init_params, layout_from_store, BoundParams, ParamLayout};
pub use timeenc::time_features;

use thiserror::Error;

use crate::autodiff::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("checkpoint is missing parameter {0:?}")]
    MissingParam(String),
    #[error("parameter {name:?} has shape {got:?}, expected {expect:?}")]
    BadShape { name: String, got: Vec<usize>, expect: Vec<usize> },
    #[error("sequence has no events")]
    EmptySequence,
    #[error("event times are not non-decreasing at position {0}")]
    TimeOrder(usize),
    #[error("query time {query} precedes the context time {context}")]
    QueryBeforeContext { query: f64, context: f64 },
    #[error("concept vector table is {got} wide, model expects {expect}")]
    ConceptWidth { got: usize, expect: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
