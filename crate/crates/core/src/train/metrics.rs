//! Backtest metrics comparing a predicted continuation against the held-out
//! tail of a sequence.

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::data::Event;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestMetrics {
    pub rmse: f64,
    pub accuracy: f64,
    pub diff_ratio: f64,
}

/// Order-insensitive overlap of two type sequences: twice the length of
/// their longest common subsequence over the sum of their lengths. 1.0 for
/// identical sequences, 0.0 for disjoint ones, and symmetric in between.
pub fn diff_ratio(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for &x in a {
        let mut diag = 0;
        for (j, &y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    2.0 * row[b.len()] as f64 / (a.len() + b.len()) as f64
}

/// Positional comparison of equal-length event runs. The i-th predicted
/// inter-event gap is scored against the i-th true gap (the first gap is
/// measured from `t_last`, the final context event), types are scored by
/// exact positional match, and `diff_ratio` ignores position entirely.
pub fn eval_metrics(pred: &[Event], truth: &[Event], t_last: f64) -> Result<BacktestMetrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(TrainError::LengthMismatch { a: pred.len(), b: truth.len() });
    }
    let gaps = |events: &[Event]| -> Vec<f64> {
        let mut prev = t_last;
        events
            .iter()
            .map(|e| {
                let gap = e.t - prev;
                prev = e.t;
                gap
            })
            .collect()
    };
    let pred_gaps = gaps(pred);
    let true_gaps = gaps(truth);
    let sq_sum: f64 = pred_gaps.iter().zip(&true_gaps).map(|(p, t)| (p - t) * (p - t)).sum();
    let rmse = (sq_sum / pred.len() as f64).sqrt();

    let hits = pred.iter().zip(truth).filter(|(p, t)| p.type_id == t.type_id).count();
    let accuracy = hits as f64 / pred.len() as f64;

    let pred_types: Vec<usize> = pred.iter().map(|e| e.type_id).collect();
    let true_types: Vec<usize> = truth.iter().map(|e| e.type_id).collect();
    Ok(BacktestMetrics { rmse, accuracy, diff_ratio: diff_ratio(&pred_types, &true_types) })
}
