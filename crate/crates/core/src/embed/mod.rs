//! Patient embeddings: pooled, normalized, static-stripped summaries of
//! predicted event propensities.

mod embedding;
mod grid;
mod pooling;

pub use embedding::{
    build_embedding, embedding_concepts, read_embeddings, write_embeddings, Extrema, PatientEmbedding,
    EMBED_STEPS,
};
pub use grid::IntensityGrid;
pub use pooling::{pool, PoolingWeights};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, EmbedError>;
