//! Cohort-table access and the fold-wise evaluation drivers that sit
//! on top of the fitters.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::elasticnet::fit_elasticnet_cv;
use super::linear::{fit_linear, r_squared};
use super::logistic::fit_logistic;
use super::roc::auroc;
use super::{AnalyticsError, Result};
use crate::embed::PatientEmbedding;
use crate::synth::CohortRow;

pub const COVARIATE_NAMES: [&str; 6] =
    ["cov_age", "cov_male", "cov_race_b", "cov_race_c", "cov_risk_pre", "cov_lab"];

/// Validated view over the cohort table; every accessor returns data
/// in row order.
#[derive(Debug, Clone)]
pub struct CohortTable {
    rows: Vec<CohortRow>,
}

impl CohortTable {
    pub fn new(rows: Vec<CohortRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(AnalyticsError::Invalid("cohort table is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for row in &rows {
            if !seen.insert(row.patient_id.as_str()) {
                return Err(AnalyticsError::Invalid(format!(
                    "duplicate patient id {}",
                    row.patient_id
                )));
            }
            for (name, value) in [("cost_cv", row.cost_cv), ("cost_all", row.cost_all)] {
                if !value.is_finite() || value < 0.0 {
                    return Err(AnalyticsError::Invalid(format!(
                        "patient {} has invalid {name} {value}",
                        row.patient_id
                    )));
                }
            }
            for (name, value) in [
                ("outcome_planted", row.outcome_planted),
                ("outcome_null", row.outcome_null),
                ("treated", row.treated),
            ] {
                if value > 1 {
                    return Err(AnalyticsError::Invalid(format!(
                        "patient {} has non-binary {name} {value}",
                        row.patient_id
                    )));
                }
            }
            let covariates = [
                row.score_strong,
                row.score_weak,
                row.cov_age,
                row.cov_male,
                row.cov_race_b,
                row.cov_race_c,
                row.cov_risk_pre,
                row.cov_lab,
            ];
            if covariates.iter().any(|v| !v.is_finite()) {
                return Err(AnalyticsError::Invalid(format!(
                    "patient {} has a non-finite column",
                    row.patient_id
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[CohortRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn patient_ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.patient_id.as_str()).collect()
    }

    /// Covariates in `COVARIATE_NAMES` order, one row per patient.
    pub fn covariate_matrix(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                vec![r.cov_age, r.cov_male, r.cov_race_b, r.cov_race_c, r.cov_risk_pre, r.cov_lab]
            })
            .collect()
    }

    pub fn outcome(&self, which: &str) -> Result<Vec<u8>> {
        match which {
            "planted" => Ok(self.rows.iter().map(|r| r.outcome_planted).collect()),
            "null" => Ok(self.rows.iter().map(|r| r.outcome_null).collect()),
            other => Err(AnalyticsError::Invalid(format!(
                "unknown outcome {other:?}; expected \"planted\" or \"null\""
            ))),
        }
    }

    pub fn score(&self, which: &str) -> Result<Vec<f64>> {
        match which {
            "strong" => Ok(self.rows.iter().map(|r| r.score_strong).collect()),
            "weak" => Ok(self.rows.iter().map(|r| r.score_weak).collect()),
            other => Err(AnalyticsError::Invalid(format!(
                "unknown score {other:?}; expected \"strong\" or \"weak\""
            ))),
        }
    }

    pub fn cost(&self, which: &str) -> Result<Vec<f64>> {
        match which {
            "all" => Ok(self.rows.iter().map(|r| r.cost_all).collect()),
            "cv" => Ok(self.rows.iter().map(|r| r.cost_cv).collect()),
            other => Err(AnalyticsError::Invalid(format!(
                "unknown cost {other:?}; expected \"all\" or \"cv\""
            ))),
        }
    }

    pub fn treated(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.treated).collect()
    }

    pub fn folds(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.cohort as usize).collect()
    }

    /// Embedding vectors reordered to match the cohort rows. Every
    /// patient must be present; extra embeddings are ignored.
    pub fn join_embeddings(&self, embeddings: &[PatientEmbedding]) -> Result<Vec<Vec<f64>>> {
        let by_id: HashMap<&str, &PatientEmbedding> =
            embeddings.iter().map(|e| (e.patient_id.as_str(), e)).collect();
        let missing: Vec<&str> = self
            .rows
            .iter()
            .filter(|r| !by_id.contains_key(r.patient_id.as_str()))
            .map(|r| r.patient_id.as_str())
            .take(5)
            .collect();
        if !missing.is_empty() {
            return Err(AnalyticsError::Invalid(format!(
                "embeddings are missing cohort patients, starting with {missing:?}"
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| by_id[r.patient_id.as_str()].values.clone())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// One score per fold, ascending fold label order.
    pub per_fold: Vec<f64>,
    pub mean: f64,
}

fn fold_labels(folds: &[usize]) -> Result<Vec<usize>> {
    let distinct: BTreeSet<usize> = folds.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(AnalyticsError::Invalid(
            "cross-validation needs at least two folds".into(),
        ));
    }
    Ok(distinct.into_iter().collect())
}

fn split_fold<'a, T: Clone>(
    features: &'a [Vec<f64>],
    targets: &'a [T],
    folds: &'a [usize],
    fold: usize,
) -> (Vec<Vec<f64>>, Vec<T>, Vec<&'a [f64]>, Vec<T>) {
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for ((row, target), &f) in features.iter().zip(targets).zip(folds) {
        if f == fold {
            test_x.push(row.as_slice());
            test_y.push(target.clone());
        } else {
            train_x.push(row.clone());
            train_y.push(target.clone());
        }
    }
    (train_x, train_y, test_x, test_y)
}

fn check_cv_inputs<T>(features: &[Vec<f64>], targets: &[T], folds: &[usize]) -> Result<()> {
    if features.is_empty() || features.len() != targets.len() || features.len() != folds.len() {
        return Err(AnalyticsError::Invalid(format!(
            "cross-validation needs aligned non-empty inputs, got {}/{}/{}",
            features.len(),
            targets.len(),
            folds.len()
        )));
    }
    Ok(())
}

/// Held-out AUROC of the balanced, majority-downsampled classifier,
/// one fold at a time: fold `f` is scored by a model that never saw
/// it.
pub fn outcome_cv(
    features: &[Vec<f64>],
    labels: &[u8],
    folds: &[usize],
    seed: u64,
) -> Result<CvReport> {
    check_cv_inputs(features, labels, folds)?;
    let mut per_fold = Vec::new();
    for fold in fold_labels(folds)? {
        let (train_x, train_y, test_x, test_y) = split_fold(features, labels, folds, fold);
        let fit = fit_logistic(&train_x, &train_y, true, true, seed)?;
        let scores: Vec<f64> = test_x.iter().map(|row| fit.decision(row)).collect();
        let score = auroc(&scores, &test_y).map_err(|e| {
            AnalyticsError::Invalid(format!("fold {fold} cannot be scored: {e}"))
        })?;
        per_fold.push(score);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CvReport { per_fold, mean })
}

/// Held-out R-squared of the least-squares cost model, fold by fold.
pub fn cost_cv(features: &[Vec<f64>], target: &[f64], folds: &[usize]) -> Result<CvReport> {
    check_cv_inputs(features, target, folds)?;
    let mut per_fold = Vec::new();
    for fold in fold_labels(folds)? {
        let (train_x, train_y, test_x, test_y) = split_fold(features, target, folds, fold);
        let fit = fit_linear(&train_x, &train_y)?;
        let test_rows: Vec<Vec<f64>> = test_x.iter().map(|r| r.to_vec()).collect();
        per_fold.push(r_squared(&fit, &test_rows, &test_y)?);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CvReport { per_fold, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetCvReport {
    /// Feature weights averaged across the fold fits.
    pub mean_weights: Vec<f64>,
    /// In how many fold fits each feature kept a non-zero weight.
    pub nonzero_counts: Vec<usize>,
    pub n_folds: usize,
}

/// Fits the sparse classifier once per fold (on the complement) and
/// reports which features survive selection, and how consistently.
pub fn elasticnet_cv_report(
    features: &[Vec<f64>],
    labels: &[u8],
    folds: &[usize],
    l1_ratio: f64,
    seed: u64,
) -> Result<ElasticNetCvReport> {
    check_cv_inputs(features, labels, folds)?;
    let p = features[0].len();
    let mut mean_weights = vec![0.0; p];
    let mut nonzero_counts = vec![0usize; p];
    let labels_list = fold_labels(folds)?;
    for &fold in &labels_list {
        let (train_x, train_y, _, _) = split_fold(features, labels, folds, fold);
        let fit = fit_elasticnet_cv(&train_x, &train_y, l1_ratio, seed)?;
        for (j, w) in fit.weights.iter().enumerate() {
            mean_weights[j] += w;
            if w.abs() > super::elasticnet::NONZERO_EPS {
                nonzero_counts[j] += 1;
            }
        }
    }
    let n_folds = labels_list.len();
    for w in &mut mean_weights {
        *w /= n_folds as f64;
    }
    Ok(ElasticNetCvReport { mean_weights, nonzero_counts, n_folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn row(pid: usize) -> CohortRow {
        CohortRow {
            patient_id: format!("{pid:05}"),
            cohort: (pid % 6) as u8,
            index_interval: 8,
            outcome_planted: (pid % 3 == 0) as u8,
            outcome_null: (pid % 2 == 0) as u8,
            treated: (pid % 4 == 0) as u8,
            cost_cv: pid as f64,
            cost_all: 2.0 * pid as f64,
            score_strong: pid as f64 / 10.0,
            score_weak: -(pid as f64),
            cov_age: (pid % 5) as f64,
            cov_male: (pid % 2) as f64,
            cov_race_b: 0.0,
            cov_race_c: 1.0,
            cov_risk_pre: 0.5,
            cov_lab: 1.5,
        }
    }

    fn table(n: usize) -> CohortTable {
        CohortTable::new((0..n).map(row).collect()).unwrap()
    }

    #[test]
    fn accessors_walk_the_rows_in_order() {
        let t = table(12);
        assert_eq!(t.len(), 12);
        assert_eq!(t.folds(), (0..12).map(|i| i % 6).collect::<Vec<_>>());
        assert_eq!(t.outcome("planted").unwrap()[..4], [1, 0, 0, 1]);
        assert_eq!(t.outcome("null").unwrap()[..3], [1, 0, 1]);
        assert_eq!(t.score("strong").unwrap()[3], 0.3);
        assert_eq!(t.score("weak").unwrap()[3], -3.0);
        assert_eq!(t.cost("cv").unwrap()[7], 7.0);
        assert_eq!(t.cost("all").unwrap()[7], 14.0);
        assert_eq!(t.treated()[..5], [1, 0, 0, 0, 1]);
        let covariates = t.covariate_matrix();
        assert_eq!(covariates[2], vec![2.0, 0.0, 0.0, 1.0, 0.5, 1.5]);
        assert_eq!(covariates[0].len(), COVARIATE_NAMES.len());
        assert!(t.outcome("bogus").is_err());
        assert!(t.score("bogus").is_err());
        assert!(t.cost("bogus").is_err());
    }

    #[test]
    fn bad_rows_are_rejected_with_the_patient_named() {
        let mut rows = vec![row(0), row(1)];
        rows[1].patient_id = rows[0].patient_id.clone();
        let err = CohortTable::new(rows).unwrap_err().to_string();
        assert!(err.contains("00000"), "{err}");

        let mut rows = vec![row(0), row(1)];
        rows[1].cost_cv = -3.0;
        assert!(CohortTable::new(rows).is_err());

        let mut rows = vec![row(0), row(1)];
        rows[0].outcome_planted = 2;
        assert!(CohortTable::new(rows).is_err());

        let mut rows = vec![row(0)];
        rows[0].cov_lab = f64::NAN;
        assert!(CohortTable::new(rows).is_err());

        assert!(CohortTable::new(Vec::new()).is_err());
    }

    #[test]
    fn embedding_join_preserves_row_order_and_names_absentees() {
        let t = table(4);
        let mut embeddings: Vec<PatientEmbedding> = (0..5)
            .rev()
            .map(|pid| PatientEmbedding {
                patient_id: format!("{pid:05}"),
                index_interval: 8,
                values: vec![pid as f64, 1.0],
            })
            .collect();
        let joined = t.join_embeddings(&embeddings).unwrap();
        assert_eq!(joined.len(), 4);
        for (i, row) in joined.iter().enumerate() {
            assert_eq!(row[0], i as f64);
        }

        embeddings.retain(|e| e.patient_id != "00002");
        let err = t.join_embeddings(&embeddings).unwrap_err().to_string();
        assert!(err.contains("00002"), "{err}");
    }

    fn planted_cv(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>, Vec<usize>) {
        let mut rng = derive_rng(seed, "cohort-cv");
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut folds = Vec::new();
        for i in 0..n {
            let signal = rng.gen::<f64>() * 2.0 - 1.0;
            x.push(vec![signal, rng.gen::<f64>()]);
            let p = 1.0 / (1.0 + (-4.0 * signal).exp());
            y.push(rng.gen_bool(p) as u8);
            folds.push(i % 6);
        }
        (x, y, folds)
    }

    #[test]
    fn fold_wise_auroc_finds_planted_signal_and_misses_noise() {
        let (x, y, folds) = planted_cv(600, 41);
        let report = outcome_cv(&x, &y, &folds, 0).unwrap();
        assert_eq!(report.per_fold.len(), 6);
        assert!(report.mean > 0.8, "signal AUROC {}", report.mean);
        let expected = report.per_fold.iter().sum::<f64>() / 6.0;
        assert_eq!(report.mean, expected);

        let shuffled: Vec<u8> = {
            use rand::seq::SliceRandom;
            let mut copy = y.clone();
            copy.shuffle(&mut derive_rng(1, "cohort-shuffle"));
            copy
        };
        let noise = outcome_cv(&x, &shuffled, &folds, 0).unwrap();
        assert!((noise.mean - 0.5).abs() < 0.1, "noise AUROC {}", noise.mean);
    }

    #[test]
    fn fold_wise_r_squared_finds_linear_signal() {
        let mut rng = derive_rng(42, "cohort-cost");
        let mut x = Vec::new();
        let mut target = Vec::new();
        let mut folds = Vec::new();
        for i in 0..600 {
            let a = rng.gen::<f64>();
            let b = rng.gen::<f64>();
            x.push(vec![a, b]);
            target.push(3.0 * a - 2.0 * b + 0.1 * (rng.gen::<f64>() - 0.5));
            folds.push(i % 6);
        }
        let report = cost_cv(&x, &target, &folds).unwrap();
        assert_eq!(report.per_fold.len(), 6);
        assert!(report.mean > 0.9, "R-squared {}", report.mean);

        let noise: Vec<f64> = (0..600).map(|_| rng.gen::<f64>()).collect();
        let null = cost_cv(&x, &noise, &folds).unwrap();
        assert!(null.mean < 0.05, "null R-squared {}", null.mean);
    }

    #[test]
    fn sparse_report_counts_stable_features() {
        let (x, y, folds) = planted_cv(360, 44);
        let report = elasticnet_cv_report(&x, &y, &folds, 0.75, 2).unwrap();
        assert_eq!(report.n_folds, 6);
        assert_eq!(report.mean_weights.len(), 2);
        assert_eq!(report.nonzero_counts.len(), 2);
        assert_eq!(report.nonzero_counts[0], 6, "the signal feature must survive every fold");
        assert!(report.mean_weights[0] > 0.0);
        for &c in &report.nonzero_counts {
            assert!(c <= 6);
        }
    }

    #[test]
    fn misaligned_cv_inputs_are_rejected() {
        let (x, y, folds) = planted_cv(60, 45);
        assert!(outcome_cv(&x, &y[..59], &folds, 0).is_err());
        assert!(cost_cv(&x, &vec![1.0; 59], &folds).is_err());
        assert!(outcome_cv(&x, &y, &vec![0; 60], 0).is_err(), "a single fold cannot cross-validate");
    }
}
