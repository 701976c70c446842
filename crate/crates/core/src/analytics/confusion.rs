//! Per-type confusion accounting for simulated continuations, plus the
//! incidence-weighted random guesser used as the comparison baseline.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub type_id: usize,
    /// How many times the type occurs in the ground truth.
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// NaN when the type was never predicted.
    pub precision: f64,
    /// NaN when the type never occurs in the truth.
    pub recall: f64,
}

/// Scores predicted continuations against held-out suffixes, ignoring
/// order: within each patient, every predicted occurrence of a type
/// matches at most one true occurrence of the same type. Rows cover
/// every type seen on either side, ordered by type id.
pub fn backtest_confusion(
    predicted: &[Vec<usize>],
    truth: &[Vec<usize>],
) -> Result<Vec<ConfusionRow>> {
    if predicted.len() != truth.len() {
        return Err(AnalyticsError::Invalid(format!(
            "confusion needs one truth suffix per prediction, got {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }

    let mut tallies: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (pred, real) in predicted.iter().zip(truth) {
        let mut pred_counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut real_counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &t in pred {
            *pred_counts.entry(t).or_default() += 1;
        }
        for &t in real {
            *real_counts.entry(t).or_default() += 1;
        }
        for (&t, &pc) in &pred_counts {
            let tc = real_counts.get(&t).copied().unwrap_or(0);
            let matched = pc.min(tc);
            let entry = tallies.entry(t).or_default();
            entry.0 += matched;
            entry.1 += pc - matched;
        }
        for (&t, &tc) in &real_counts {
            let pc = pred_counts.get(&t).copied().unwrap_or(0);
            tallies.entry(t).or_default().2 += tc - pc.min(tc);
        }
    }

    Ok(tallies
        .into_iter()
        .map(|(type_id, (tp, fp, fn_))| {
            let predicted_n = tp + fp;
            let support = tp + fn_;
            ConfusionRow {
                type_id,
                support,
                tp,
                fp,
                fn_,
                precision: if predicted_n == 0 { f64::NAN } else { tp as f64 / predicted_n as f64 },
                recall: if support == 0 { f64::NAN } else { tp as f64 / support as f64 },
            }
        })
        .collect())
}

/// Writes rows with human-readable type names; `name_of` maps a type id
/// to its column label.
pub fn write_confusion_csv(
    path: &Path,
    rows: &[ConfusionRow],
    name_of: impl Fn(usize) -> String,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["type", "support", "tp", "fp", "fn", "precision", "recall"])?;
    for row in rows {
        writer.write_record([
            name_of(row.type_id),
            row.support.to_string(),
            row.tp.to_string(),
            row.fp.to_string(),
            row.fn_.to_string(),
            row.precision.to_string(),
            row.recall.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Draws `k` independent guesses per patient from the given incidence
/// distribution. Returned entries are indices into `incidence`, not
/// type ids; the caller owns that mapping.
pub fn weighted_guess(
    incidence: &[f64],
    n_patients: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if incidence.is_empty() {
        return Err(AnalyticsError::Invalid("incidence must be non-empty".into()));
    }
    if incidence.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(AnalyticsError::Invalid("incidence must be finite and non-negative".into()));
    }
    let total: f64 = incidence.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AnalyticsError::Invalid(format!(
            "incidence must sum to one, got {total}"
        )));
    }
    if k == 0 {
        return Err(AnalyticsError::Invalid("each patient needs at least one guess".into()));
    }

    let mut rng = derive_rng(seed, "weighted-guess");
    let mut out = Vec::with_capacity(n_patients);
    for _ in 0..n_patients {
        let mut guesses = Vec::with_capacity(k);
        for _ in 0..k {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = incidence.len() - 1;
            for (idx, p) in incidence.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = idx;
                    break;
                }
            }
            guesses.push(pick);
        }
        out.push(guesses);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Order-free reference scorer: match each predicted item against an
    /// unmatched true item of the same type, one patient at a time.
    fn oracle(predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> BTreeMap<usize, (usize, usize, usize)> {
        let mut tallies: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
        for (pred, real) in predicted.iter().zip(truth) {
            let mut remaining = real.clone();
            for &t in pred {
                if let Some(pos) = remaining.iter().position(|&r| r == t) {
                    remaining.swap_remove(pos);
                    tallies.entry(t).or_default().0 += 1;
                } else {
                    tallies.entry(t).or_default().1 += 1;
                }
            }
            for &t in &remaining {
                tallies.entry(t).or_default().2 += 1;
            }
        }
        tallies
    }

    #[test]
    fn hand_worked_three_patient_toy() {
        let predicted = vec![vec![1, 1, 2], vec![3], vec![2, 4]];
        let truth = vec![vec![1, 2, 2], vec![1], vec![4]];
        let rows = backtest_confusion(&predicted, &truth).unwrap();
        assert_eq!(rows.len(), 4);

        // Type 1: patient 0 matches one of two predictions, patient 1
        // misses its single true occurrence entirely.
        assert_eq!((rows[0].tp, rows[0].fp, rows[0].fn_), (1, 1, 1));
        assert_eq!(rows[0].support, 2);
        assert_eq!(rows[0].precision, 0.5);
        assert_eq!(rows[0].recall, 0.5);
        // Type 2: one of patient 0's two true copies is found, the
        // stray prediction for patient 2 is a false positive.
        assert_eq!((rows[1].tp, rows[1].fp, rows[1].fn_), (1, 1, 1));
        // Type 3 was only ever predicted, type 4 only matched.
        assert_eq!((rows[2].tp, rows[2].fp, rows[2].fn_), (0, 1, 0));
        assert!(rows[2].recall.is_nan());
        assert_eq!((rows[3].tp, rows[3].fp, rows[3].fn_), (1, 0, 0));
        assert_eq!(rows[3].precision, 1.0);
    }

    #[test]
    fn matches_the_greedy_reference_on_random_toys() {
        let mut rng = derive_rng(3, "confusion-oracle");
        for _ in 0..50 {
            let n: usize = rng.gen_range(1..8);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<usize>> {
                (0..n)
                    .map(|_| (0..rng.gen_range(0..6)).map(|_| rng.gen_range(1..5)).collect())
                    .collect()
            };
            let predicted = draw(&mut rng);
            let truth = draw(&mut rng);
            let rows = backtest_confusion(&predicted, &truth).unwrap();
            let want = oracle(&predicted, &truth);
            assert_eq!(rows.len(), want.len());
            for row in rows {
                assert_eq!((row.tp, row.fp, row.fn_), want[&row.type_id]);
            }
        }
    }

    #[test]
    fn rare_type_arithmetic_comes_out_right() {
        // One cohort's hardest type: 460 joint hits, 835 extra
        // predictions, 2569 missed occurrences.
        let mut predicted = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..460 {
            predicted.push(vec![7]);
            truth.push(vec![7]);
        }
        for _ in 0..835 {
            predicted.push(vec![7]);
            truth.push(vec![]);
        }
        for _ in 0..2569 {
            predicted.push(vec![]);
            truth.push(vec![7]);
        }
        let rows = backtest_confusion(&predicted, &truth).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!((row.tp, row.fp, row.fn_, row.support), (460, 835, 2569, 3029));
        assert_eq!((row.precision * 100.0).round() / 100.0, 0.36);
        assert_eq!((row.recall * 100.0).round() / 100.0, 0.15);
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let truth = vec![vec![1, 2], vec![3, 3, 1], vec![2]];
        let rows = backtest_confusion(&truth, &truth).unwrap();
        for row in rows {
            assert_eq!(row.fp, 0);
            assert_eq!(row.fn_, 0);
            assert_eq!(row.precision, 1.0);
            assert_eq!(row.recall, 1.0);
        }
    }

    #[test]
    fn misaligned_patients_are_rejected() {
        assert!(backtest_confusion(&[vec![1]], &[]).is_err());
        assert!(backtest_confusion(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn guesses_track_the_incidence_distribution() {
        let incidence = [0.25, 0.25, 0.25, 0.25];
        let guesses = weighted_guess(&incidence, 100_000, 1, 17).unwrap();
        let mut counts = [0usize; 4];
        for patient in &guesses {
            assert_eq!(patient.len(), 1);
            counts[patient[0]] += 1;
        }
        for c in counts {
            let share = c as f64 / 100_000.0;
            assert!((share - 0.25).abs() < 0.01, "share {share} drifted from 0.25");
        }
    }

    #[test]
    fn skewed_incidence_shows_up_in_the_draws() {
        let incidence = [0.9, 0.1];
        let guesses = weighted_guess(&incidence, 50_000, 2, 4).unwrap();
        let total: usize = guesses.iter().map(Vec::len).sum();
        let zeros: usize = guesses.iter().flatten().filter(|&&g| g == 0).count();
        let share = zeros as f64 / total as f64;
        assert!((share - 0.9).abs() < 0.01, "share {share} drifted from 0.9");
    }

    #[test]
    fn guessing_is_deterministic_and_validated() {
        let incidence = [0.5, 0.5];
        assert_eq!(
            weighted_guess(&incidence, 20, 3, 8).unwrap(),
            weighted_guess(&incidence, 20, 3, 8).unwrap()
        );
        assert!(weighted_guess(&[], 5, 1, 0).is_err());
        assert!(weighted_guess(&[0.5, 0.4], 5, 1, 0).is_err());
        assert!(weighted_guess(&[1.2, -0.2], 5, 1, 0).is_err());
        assert!(weighted_guess(&incidence, 5, 0, 0).is_err());
    }
}
