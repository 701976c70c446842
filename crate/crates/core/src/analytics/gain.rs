//! Cumulative gain curves over cost, and the paired permutation test that
//! compares two rankings by their gain AUC.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Result};
use crate::data::PatientId;
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    /// Cumulative (patient fraction, cost fraction) points, starting at
    /// the origin and ending at (1, 1).
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area under the curve.
    pub auc: f64,
}

/// Walks patients from highest to lowest score and accumulates the
/// fraction of total cost captured. Score ties are broken by patient id
/// so the curve is machine-independent.
pub fn gain_curve(scores: &[f64], costs: &[f64], ids: &[PatientId]) -> Result<GainCurve> {
    let n = scores.len();
    if n == 0 || costs.len() != n || ids.len() != n {
        return Err(AnalyticsError::Invalid(format!(
            "gain curve needs aligned non-empty inputs, got {n} scores, {} costs, {} ids",
            costs.len(),
            ids.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AnalyticsError::Invalid("scores must be finite".into()));
    }
    if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(AnalyticsError::Invalid("costs must be finite and non-negative".into()));
    }
    let total: f64 = costs.iter().sum();
    if total <= 0.0 {
        return Err(AnalyticsError::Invalid("total cost is zero; the curve is undefined".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap().then_with(|| ids[a].cmp(&ids[b]))
    });

    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut captured = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        captured += costs[idx];
        points.push(((rank + 1) as f64 / n as f64, captured / total));
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(GainCurve { points, auc })
}

pub fn write_gain_csv(path: &Path, curve: &GainCurve) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["patient_fraction", "cost_fraction"])?;
    for (x, y) in &curve.points {
        writer.write_record([x.to_string(), y.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTest {
    /// Gain-AUC difference of the unpermuted rankings, A minus B.
    pub observed: f64,
    /// One-sided add-one-smoothed p-value.
    pub p: f64,
    pub iters: usize,
    pub seed: u64,
}

/// Tests whether ranking A captures cost better than ranking B.
///
/// Each iteration swaps the two scores within each patient with
/// probability one half, recomputes the gain-AUC difference, and counts
/// how often the permuted difference reaches the observed one;
/// `p = (count + 1) / (iters + 1)`. Iterations use pre-split RNG streams
/// and may run in parallel without changing the answer.
pub fn paired_permutation(
    scores_a: &[f64],
    scores_b: &[f64],
    costs: &[f64],
    ids: &[PatientId],
    iters: usize,
    seed: u64,
) -> Result<PermTest> {
    let n = scores_a.len();
    if scores_b.len() != n || costs.len() != n || ids.len() != n {
        return Err(AnalyticsError::Invalid(format!(
            "permutation test needs aligned inputs, got {n}/{}/{}/{}",
            scores_b.len(),
            costs.len(),
            ids.len()
        )));
    }
    if iters == 0 {
        return Err(AnalyticsError::Invalid("permutation test needs at least one iteration".into()));
    }

    let observed = gain_curve(scores_a, costs, ids)?.auc - gain_curve(scores_b, costs, ids)?.auc;

    let hits: usize = (0..iters)
        .into_par_iter()
        .map(|iter| {
            let mut rng = derive_rng(seed, &format!("perm/{iter}"));
            let mut a = scores_a.to_vec();
            let mut b = scores_b.to_vec();
            for i in 0..n {
                if rng.gen::<bool>() {
                    std::mem::swap(&mut a[i], &mut b[i]);
                }
            }
            let d = gain_curve(&a, costs, ids).expect("validated inputs").auc
                - gain_curve(&b, costs, ids).expect("validated inputs").auc;
            usize::from(d >= observed)
        })
        .sum();

    Ok(PermTest { observed, p: (hits + 1) as f64 / (iters + 1) as f64, iters, seed })
}
