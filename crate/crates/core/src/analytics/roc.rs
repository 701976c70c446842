//! Area under the receiver operating curve.

use super::{AnalyticsError, Result};

/// Mann-Whitney AUROC: the probability that a random positive outscores a
/// random negative, with half credit for ties. Computed through average
/// ranks, so tied blocks of any size are handled exactly.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(AnalyticsError::Invalid(format!(
            "{} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AnalyticsError::Invalid("scores must be finite".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(AnalyticsError::Invalid("labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AnalyticsError::Invalid("AUROC needs both classes present".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; a tied block shares the average of the ranks
        // it spans.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_counted_pairs_give_three_quarters() {
        let value = auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_relative_eq!(value, 0.75);
    }

    #[test]
    fn separated_classes_score_one_and_ties_score_half() {
        assert_relative_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_relative_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_relative_eq!(auroc(&[0.5; 6], &[0, 1, 0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn increasing_transforms_leave_the_value_alone() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.2, 0.4];
        let labels = [0, 1, 0, 1, 0, 1];
        let base = auroc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (5.0 * s).tanh()).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| 100.0 * s + 7.0).collect();
        assert_relative_eq!(auroc(&squashed, &labels).unwrap(), base);
        assert_relative_eq!(auroc(&shifted, &labels).unwrap(), base);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auroc(&[0.1, 0.2], &[0, 0]).is_err());
        assert!(auroc(&[0.1], &[0, 1]).is_err());
        assert!(auroc(&[f64::NAN, 0.2], &[0, 1]).is_err());
        assert!(auroc(&[0.1, 0.2], &[0, 2]).is_err());
    }
}
