//! Ridge-penalized logistic regression solved by gradient descent with
//! Armijo backtracking. Serves both the outcome classifiers and the
//! propensity model.

use rand::seq::index::sample;

use super::{AnalyticsError, Result};
use crate::rng::derive_rng;

const RIDGE: f64 = 1.0;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 1000;
const DOWNSAMPLE_RATIO: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Row indices retained when majority downsampling fired, sorted;
    /// `None` when the full data was used.
    pub downsample_kept: Option<Vec<usize>>,
}

impl LogisticFit {
    /// Linear score before the sigmoid.
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn prob(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(-z)) evaluated without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn check_design(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AnalyticsError::Invalid(format!(
            "logistic fit needs aligned non-empty inputs, got {} rows and {} labels",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|row| row.len() != p) {
        return Err(AnalyticsError::Invalid("design rows must share a non-zero width".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::Invalid("design values must be finite".into()));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(AnalyticsError::Invalid("labels must be 0 or 1".into()));
    }
    if y.iter().all(|&l| l == 0) || y.iter().all(|&l| l == 1) {
        return Err(AnalyticsError::Invalid("both classes must be present".into()));
    }
    Ok(p)
}

/// Minimizes the weighted sum of logistic losses plus a ridge penalty
/// of `RIDGE / 2` times the squared weight norm; the intercept is never
/// penalized. Stops when the gradient norm per unit of sample weight
/// falls under `GRAD_TOL`.
fn fit_logistic_weighted(
    x: &[Vec<f64>],
    y: &[u8],
    sample_weights: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let p = check_design(x, y)?;
    let weight_total: f64 = sample_weights.iter().sum();

    let objective = |w: &[f64], b: f64| -> f64 {
        let data: f64 = x
            .iter()
            .zip(y)
            .zip(sample_weights)
            .map(|((row, &label), &omega)| {
                let z = b + w.iter().zip(row).map(|(wj, xj)| wj * xj).sum::<f64>();
                let signed = if label == 1 { z } else { -z };
                omega * log1p_exp_neg(signed)
            })
            .sum();
        data + 0.5 * RIDGE * w.iter().map(|wj| wj * wj).sum::<f64>()
    };

    let gradient = |w: &[f64], b: f64| -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for ((row, &label), &omega) in x.iter().zip(y).zip(sample_weights) {
            let z = b + w.iter().zip(row).map(|(wj, xj)| wj * xj).sum::<f64>();
            let residual = omega * (sigmoid(z) - f64::from(label));
            gb += residual;
            for (gj, xj) in gw.iter_mut().zip(row) {
                *gj += residual * xj;
            }
        }
        for (gj, wj) in gw.iter_mut().zip(w) {
            *gj += RIDGE * wj;
        }
        (gw, gb)
    };

    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut f = objective(&w, b);
    for _ in 0..MAX_ITERS {
        let (gw, gb) = gradient(&w, b);
        let gnorm_sq = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm_sq.sqrt() / weight_total <= GRAD_TOL {
            break;
        }
        let mut step = 1.0;
        loop {
            let trial_w: Vec<f64> = w.iter().zip(&gw).map(|(wj, gj)| wj - step * gj).collect();
            let trial_b = b - step * gb;
            let trial_f = objective(&trial_w, trial_b);
            if trial_f <= f - 1e-4 * step * gnorm_sq || step < 1e-14 {
                w = trial_w;
                b = trial_b;
                f = trial_f;
                break;
            }
            step /= 2.0;
        }
    }
    Ok((w, b))
}

/// Fits the classifier, optionally trimming an overwhelming majority
/// class and reweighting so both classes pull equally.
///
/// With `downsample`, when negatives outnumber positives more than
/// five to one, a random five-to-one subset of negatives is kept
/// (drawn without replacement from `seed`) and the retained row
/// indices are reported on the fit. With `balanced`, each row gets
/// weight `n / (2 * n_class)` computed after any downsampling.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[u8],
    balanced: bool,
    downsample: bool,
    seed: u64,
) -> Result<LogisticFit> {
    check_design(x, y)?;
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    let n_neg = y.len() - n_pos;

    let kept: Option<Vec<usize>> = if downsample && n_neg > DOWNSAMPLE_RATIO * n_pos {
        let negatives: Vec<usize> =
            y.iter().enumerate().filter(|(_, &l)| l == 0).map(|(i, _)| i).collect();
        let mut rng = derive_rng(seed, "logistic/downsample");
        let chosen = sample(&mut rng, negatives.len(), DOWNSAMPLE_RATIO * n_pos);
        let mut keep: Vec<usize> = chosen.iter().map(|j| negatives[j]).collect();
        keep.extend(y.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i));
        keep.sort_unstable();
        Some(keep)
    } else {
        None
    };

    let (rows, labels): (Vec<Vec<f64>>, Vec<u8>) = match &kept {
        Some(keep) => keep.iter().map(|&i| (x[i].clone(), y[i])).unzip(),
        None => (x.to_vec(), y.to_vec()),
    };

    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = n - pos;
    let sample_weights: Vec<f64> = labels
        .iter()
        .map(|&l| {
            if !balanced {
                1.0
            } else if l == 1 {
                n / (2.0 * pos)
            } else {
                n / (2.0 * neg)
            }
        })
        .collect();

    let (weights, intercept) = fit_logistic_weighted(&rows, &labels, &sample_weights)?;
    Ok(LogisticFit { weights, intercept, downsample_kept: kept })
}
