//! Deterministic train/validation/test partition of patient ids.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, PatientId, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<PatientId>,
    pub val: Vec<PatientId>,
    pub test: Vec<PatientId>,
}

/// Shuffles the ids with the `"split"` substream of `seed` and cuts them at
/// `fractions = (train, val, test)`. The three parts are disjoint, cover the
/// input, and are returned sorted.
pub fn split_patients(ids: &[PatientId], fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (a, b, c) = fractions;
    let sum = a + b + c;
    if a <= 0.0 || b < 0.0 || c < 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(vec![a, b, c]));
    }
    let mut sorted: Vec<PatientId> = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut rng = derive_rng(seed, "split");
    sorted.shuffle(&mut rng);

    let n = sorted.len();
    let n_train = (n as f64 * a).round() as usize;
    let n_val = (n as f64 * b).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);

    let mut train = sorted[..n_train].to_vec();
    let mut val = sorted[n_train..n_train + n_val].to_vec();
    let mut test = sorted[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}
