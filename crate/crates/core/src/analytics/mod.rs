//! Downstream analytics over embeddings and cohort tables: backtest
//! confusion against weighted guessing, classification and regression
//! heads, propensity matching, cumulative gain curves, and the paired
//! permutation test.

mod cohorts;
mod confusion;
mod elasticnet;
mod gain;
mod linear;
mod logistic;
mod matching;
mod roc;

pub use cohorts::{
    cost_cv, elasticnet_cv_report, outcome_cv, CohortTable, CvReport, ElasticNetCvReport, COVARIATE_NAMES,
};
pub use confusion::{backtest_confusion, weighted_guess, write_confusion_csv, ConfusionRow};
pub use elasticnet::{fit_elasticnet_cv, ElasticNetFit};
pub use gain::{gain_curve, paired_permutation, write_gain_csv, GainCurve, PermTest};
pub use linear::{fit_linear, r_squared, LinearFit};
pub use logistic::{fit_logistic, LogisticFit};
pub use matching::{group_smd, propensity_match, MatchReport, SMD_FLAG_THRESHOLD};
pub use roc::auroc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;
