//! Sparse logistic regression along an elastic-net penalty path, with
//! the penalty strength chosen by stratified cross-validated precision.

use rand::seq::SliceRandom;

use super::{AnalyticsError, Result};
use crate::rng::derive_rng;

const N_LAMBDAS: usize = 10;
const LAMBDA_FLOOR_RATIO: f64 = 1e-3;
const N_FOLDS: usize = 5;
const MAX_ITERS: usize = 1000;
const OBJ_TOL: f64 = 1e-8;
pub const NONZERO_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub chosen_lambda: f64,
    /// Candidate penalties paired with their mean cross-validated
    /// precision, strongest penalty first.
    pub fold_precisions: Vec<(f64, f64)>,
}

impl ElasticNetFit {
    pub fn nonzero_features(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() > NONZERO_EPS)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn prob(&self, row: &[f64]) -> f64 {
        let z = self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
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

fn soft_threshold(v: f64, bound: f64) -> f64 {
    if v > bound {
        v - bound
    } else if v < -bound {
        v + bound
    } else {
        0.0
    }
}

/// Mean logistic loss plus the ridge half of the penalty; the lasso
/// half is handled by its proximal operator, not this function.
fn smooth_parts(
    x: &[Vec<f64>],
    y: &[u8],
    w: &[f64],
    b: f64,
    ridge: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let p = w.len();
    let mut loss = 0.0;
    let mut gw = vec![0.0; p];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = b + w.iter().zip(row).map(|(wj, xj)| wj * xj).sum::<f64>();
        let signed = if label == 1 { z } else { -z };
        loss += if signed > 0.0 {
            (-signed).exp().ln_1p()
        } else {
            -signed + signed.exp().ln_1p()
        };
        let residual = (sigmoid(z) - f64::from(label)) / n;
        gb += residual;
        for (gj, xj) in gw.iter_mut().zip(row) {
            *gj += residual * xj;
        }
    }
    loss /= n;
    loss += 0.5 * ridge * w.iter().map(|v| v * v).sum::<f64>();
    for (gj, wj) in gw.iter_mut().zip(w) {
        *gj += ridge * wj;
    }
    (loss, gw, gb)
}

/// Proximal gradient descent on
/// `mean logistic loss + lambda * (alpha * |w|_1 + (1 - alpha) / 2 * |w|^2)`
/// with backtracking on the quadratic majorizer. The intercept is
/// unpenalized.
fn ista(x: &[Vec<f64>], y: &[u8], lambda: f64, alpha: f64) -> (Vec<f64>, f64) {
    let p = x[0].len();
    let ridge = lambda * (1.0 - alpha);
    let lasso = lambda * alpha;
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = smooth_parts(x, y, &w, b, ridge);
    let mut objective = loss;
    let mut step = 1.0;
    for _ in 0..MAX_ITERS {
        let (next_w, next_b, next_loss) = loop {
            let trial_w: Vec<f64> = w
                .iter()
                .zip(&gw)
                .map(|(wj, gj)| soft_threshold(wj - step * gj, step * lasso))
                .collect();
            let trial_b = b - step * gb;
            let (trial_loss, _, _) = smooth_parts(x, y, &trial_w, trial_b, ridge);
            let diff_sq: f64 = trial_w
                .iter()
                .zip(&w)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                + (trial_b - b) * (trial_b - b);
            let linear: f64 = trial_w.iter().zip(&w).zip(&gw).map(|((a, c), g)| (a - c) * g).sum::<f64>()
                + (trial_b - b) * gb;
            if trial_loss <= loss + linear + diff_sq / (2.0 * step) || step < 1e-14 {
                break (trial_w, trial_b, trial_loss);
            }
            step /= 2.0;
        };
        w = next_w;
        b = next_b;
        loss = next_loss;
        let next_objective = loss + lasso * w.iter().map(|v| v.abs()).sum::<f64>();
        let done = (objective - next_objective).abs() <= OBJ_TOL * objective.abs().max(1.0);
        objective = next_objective;
        let parts = smooth_parts(x, y, &w, b, ridge);
        gw = parts.1;
        gb = parts.2;
        if done {
            break;
        }
        step *= 2.0;
    }
    (w, b)
}

/// Smallest penalty that keeps every weight at zero, from the
/// covariance of each feature with the labels. Both sides are
/// centered so a constant feature contributes exactly zero.
fn lambda_max(x: &[Vec<f64>], y: &[u8], alpha: f64) -> f64 {
    let n = x.len() as f64;
    let mean_y = y.iter().map(|&l| f64::from(l)).sum::<f64>() / n;
    let p = x[0].len();
    let mut best = 0.0f64;
    for j in 0..p {
        let mean_x = x.iter().map(|row| row[j]).sum::<f64>() / n;
        let dot: f64 = x
            .iter()
            .zip(y)
            .map(|(row, &l)| (row[j] - mean_x) * (f64::from(l) - mean_y))
            .sum();
        best = best.max(dot.abs());
    }
    best / (n * alpha.max(LAMBDA_FLOOR_RATIO))
}

/// Deals each class round-robin across folds after a seeded shuffle,
/// so every fold sees both classes whenever the counts allow it.
fn stratified_folds(y: &[u8], seed: u64) -> Vec<usize> {
    let mut rng = derive_rng(seed, "elasticnet/folds");
    let mut assignment = vec![0usize; y.len()];
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> =
            y.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect();
        members.shuffle(&mut rng);
        for (slot, idx) in members.into_iter().enumerate() {
            assignment[idx] = slot % N_FOLDS;
        }
    }
    assignment
}

/// Precision of the 0.5-threshold decision; an empty predicted
/// positive set scores zero rather than being skipped.
fn precision_at_half(probs: &[f64], labels: &[u8]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (&p, &l) in probs.iter().zip(labels) {
        if p > 0.5 {
            if l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// First index with the best score; the grid is descending, so ties
/// resolve toward the stronger, sparser penalty.
fn select_lambda(precisions: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &p) in precisions.iter().enumerate() {
        if p > precisions[best] {
            best = idx;
        }
    }
    best
}

pub fn fit_elasticnet_cv(
    x: &[Vec<f64>],
    y: &[u8],
    l1_ratio: f64,
    seed: u64,
) -> Result<ElasticNetFit> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AnalyticsError::Invalid(format!(
            "elastic net needs aligned non-empty inputs, got {} rows and {} labels",
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
    if !(0.0..=1.0).contains(&l1_ratio) {
        return Err(AnalyticsError::Invalid(format!(
            "l1 ratio must lie in [0, 1], got {l1_ratio}"
        )));
    }

    let top = lambda_max(x, y, l1_ratio);
    if !top.is_finite() || top <= 0.0 {
        return Err(AnalyticsError::Invalid(
            "no feature correlates with the labels; the penalty path is degenerate".into(),
        ));
    }
    let ratio = LAMBDA_FLOOR_RATIO.powf(1.0 / (N_LAMBDAS - 1) as f64);
    let grid: Vec<f64> = (0..N_LAMBDAS).map(|k| top * ratio.powi(k as i32)).collect();

    let folds = stratified_folds(y, seed);
    let mut mean_precisions = Vec::with_capacity(N_LAMBDAS);
    for &lambda in &grid {
        let mut total = 0.0;
        for fold in 0..N_FOLDS {
            let mut train_x = Vec::new();
            let mut train_y = Vec::new();
            let mut test_x = Vec::new();
            let mut test_y = Vec::new();
            for (i, row) in x.iter().enumerate() {
                if folds[i] == fold {
                    test_x.push(row.as_slice());
                    test_y.push(y[i]);
                } else {
                    train_x.push(row.clone());
                    train_y.push(y[i]);
                }
            }
            let (w, b) = ista(&train_x, &train_y, lambda, l1_ratio);
            let probs: Vec<f64> = test_x
                .iter()
                .map(|row| sigmoid(b + w.iter().zip(*row).map(|(wj, xj)| wj * xj).sum::<f64>()))
                .collect();
            total += precision_at_half(&probs, &test_y);
        }
        mean_precisions.push(total / N_FOLDS as f64);
    }

    let chosen = select_lambda(&mean_precisions);
    let (weights, intercept) = ista(x, y, grid[chosen], l1_ratio);
    Ok(ElasticNetFit {
        weights,
        intercept,
        chosen_lambda: grid[chosen],
        fold_precisions: grid.into_iter().zip(mean_precisions).collect(),
    })
}
