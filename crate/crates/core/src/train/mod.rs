//! Likelihood training: sequence NLL with Monte-Carlo survival terms, the
//! epoch loop with validation-selected checkpointing, thinning-based event
//! sampling, multi-step rollout, and backtest metrics.

mod fit;
mod metrics;
mod nll;
mod rollout;
mod thinning;

pub use fit::{train, validation_nll, write_epoch_log, EpochRow, TrainConfig, TrainOutcome};
pub use metrics::{diff_ratio, eval_metrics, BacktestMetrics};
pub use nll::{sequence_nll, MAX_MC_SAMPLES};
pub use rollout::{rollout, RolloutResult};
pub use thinning::{thinning_next, IntensityEval, NextEvent, THINNING_MAX_REJECTS};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::autodiff::TensorError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error("{0}")]
    BadConfig(String),
    #[error("thinning bound {0} is not positive and finite")]
    BadBound(f64),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("sequence metrics need equal lengths, got {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
