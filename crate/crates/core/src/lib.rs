//! Neural temporal point process library for marked clinical-style event
//! sequences: synthetic cohort generation, attention-based intensity models,
//! likelihood training, thinning-based simulation, patient embeddings, and the
//! downstream risk-stratification analytics that consume them.

pub mod analytics;
pub mod autodiff;
pub mod data;
pub mod embed;
pub mod model;
pub mod rng;
pub mod synth;
pub mod train;

pub use autodiff::{Graph, ParamStore, Tensor, TensorError, Var};
