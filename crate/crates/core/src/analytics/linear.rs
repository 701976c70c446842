//! Ordinary least squares with an intercept, plus held-out R².

use super::{AnalyticsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

/// Least squares via the normal equations. With fewer rows than features
/// the system is singular, so a ridge penalty of 1e-6 on the non-intercept
/// coefficients keeps it definite.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AnalyticsError::Invalid(format!("{} feature rows against {} targets", x.len(), y.len())));
    }
    let p = x[0].len();
    if x.iter().any(|row| row.len() != p) {
        return Err(AnalyticsError::Invalid("feature rows have inconsistent widths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::Invalid("features and targets must be finite".into()));
    }
    let ridge = if x.len() > p { 0.0 } else { 1e-6 };

    // Augmented design [1 | x]: d unknowns, intercept first.
    let d = p + 1;
    let mut ata = vec![0.0; d * d];
    let mut aty = vec![0.0; d];
    for (row, &target) in x.iter().zip(y) {
        let mut aug = Vec::with_capacity(d);
        aug.push(1.0);
        aug.extend_from_slice(row);
        for i in 0..d {
            aty[i] += aug[i] * target;
            for j in 0..d {
                ata[i * d + j] += aug[i] * aug[j];
            }
        }
    }
    for i in 1..d {
        ata[i * d + i] += ridge;
    }

    let beta = solve(&mut ata, &mut aty, d)?;
    Ok(LinearFit { intercept: beta[0], weights: beta[1..].to_vec() })
}

/// Coefficient of determination on held-out data: `1 - SS_res / SS_tot`.
/// A constant target has no variance to explain, so the value is NaN.
pub fn r_squared(fit: &LinearFit, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    if x.is_empty() || x.len() != y.len() {
        return Err(AnalyticsError::Invalid(format!("{} feature rows against {} targets", x.len(), y.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(row, &v)| (v - fit.predict(row)).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(f64::NAN);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Gaussian elimination with partial pivoting; `a` is row-major `n x n`.
fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if a[pivot * n + col].abs() < 1e-12 {
            return Err(AnalyticsError::Invalid("normal equations are singular".into()));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row * n + j] * out[j];
        }
        out[row] = acc / a[row * n + row];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn single_feature_slope_is_hand_computable() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let fit = fit_linear(&x, &[2.0, 4.0, 6.0]).unwrap();
        assert_relative_eq!(fit.weights[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.intercept, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_linear_data_scores_one_held_out() {
        let mut rng = derive_rng(2, "linear-exact");
        let gen_rows = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
            let y = x.iter().map(|r| 4.0 - 2.0 * r[0] + 0.5 * r[1] + 3.0 * r[2]).collect();
            (x, y)
        };
        let (x_train, y_train) = gen_rows(&mut rng, 50);
        let (x_test, y_test) = gen_rows(&mut rng, 30);
        let fit = fit_linear(&x_train, &y_train).unwrap();
        let r2 = r_squared(&fit, &x_test, &y_test).unwrap();
        assert_relative_eq!(r2, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn independent_target_explains_almost_nothing() {
        let mut rng = derive_rng(3, "linear-null");
        let x: Vec<Vec<f64>> = (0..4000).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let fit = fit_linear(&x[..2000], &y[..2000]).unwrap();
        let r2 = r_squared(&fit, &x[2000..], &y[2000..]).unwrap();
        assert!(r2.abs() < 0.02, "null R² {r2} should hug zero");
    }

    #[test]
    fn wide_data_falls_back_to_ridge() {
        let mut rng = derive_rng(4, "linear-wide");
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| rng.gen::<f64>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let fit = fit_linear(&x, &y).unwrap();
        assert!(fit.weights.iter().all(|w| w.is_finite()));
        // The penalized solution still reproduces the training targets
        // almost exactly; only definiteness needed the ridge.
        for (row, &target) in x.iter().zip(&y) {
            assert_relative_eq!(fit.predict(row), target, epsilon = 1e-3);
        }
    }

    #[test]
    fn constant_target_has_undefined_r_squared() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let fit = fit_linear(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(r_squared(&fit, &x, &[5.0, 5.0, 5.0]).unwrap().is_nan());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(fit_linear(&[], &[]).is_err());
        assert!(fit_linear(&[vec![1.0]], &[1.0, 2.0]).is_err());
        assert!(fit_linear(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0]).is_err());
        assert!(fit_linear(&[vec![f64::NAN]], &[1.0]).is_err());
    }
}
