//! Greedy propensity-score matching and the covariate-balance check
//! that decides whether the matched groups are comparable.

use serde::{Deserialize, Serialize};

use super::logistic::fit_logistic;
use super::{AnalyticsError, Result};

pub const SMD_FLAG_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// (treated row, control row) index pairs in match order.
    pub pairs: Vec<(usize, usize)>,
    /// Absolute standardized mean difference per covariate, computed
    /// over the matched rows only.
    pub smd: Vec<f64>,
    /// Covariate indices whose difference exceeds the balance
    /// threshold.
    pub flagged: Vec<usize>,
    /// True when the control pool ran out before every treated row
    /// found a partner.
    pub partial: bool,
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn smd(treated: &[f64], control: &[f64]) -> f64 {
    let (mt, vt) = mean_and_var(treated);
    let (mc, vc) = mean_and_var(control);
    let num = (mt - mc).abs();
    if num == 0.0 {
        return 0.0;
    }
    let denom = ((vt + vc) / 2.0).sqrt();
    if denom == 0.0 {
        f64::INFINITY
    } else {
        num / denom
    }
}

/// Per-covariate absolute standardized mean difference between the
/// flagged (1) and unflagged (0) rows, using all rows as they stand.
/// This is the pre-matching balance that `propensity_match` is meant
/// to shrink.
pub fn group_smd(x: &[Vec<f64>], flags: &[u8]) -> Result<Vec<f64>> {
    if x.is_empty() || x.len() != flags.len() {
        return Err(AnalyticsError::Invalid(format!(
            "balance check needs aligned non-empty inputs, got {} rows and {} flags",
            x.len(),
            flags.len()
        )));
    }
    if flags.iter().any(|&f| f > 1) {
        return Err(AnalyticsError::Invalid("group flags must be 0 or 1".into()));
    }
    if !flags.contains(&1) || !flags.contains(&0) {
        return Err(AnalyticsError::Invalid("balance check needs both groups present".into()));
    }
    let p = x[0].len();
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let pick = |flag: u8| -> Vec<f64> {
            x.iter().zip(flags).filter(|(_, &f)| f == flag).map(|(row, _)| row[j]).collect()
        };
        out.push(smd(&pick(1), &pick(0)));
    }
    Ok(out)
}

/// Pairs each treated row with the closest untreated row by propensity
/// score, greedily and without replacement, then reports how well the
/// covariates balance across the matched groups.
///
/// Treated rows are served in descending propensity order so the
/// hardest-to-match cases pick first; score ties fall back to row
/// order on both sides, which keeps the result independent of thread
/// count and platform.
pub fn propensity_match(
    x: &[Vec<f64>],
    treated: &[u8],
    seed: u64,
) -> Result<MatchReport> {
    if x.is_empty() || x.len() != treated.len() {
        return Err(AnalyticsError::Invalid(format!(
            "matching needs aligned non-empty inputs, got {} rows and {} flags",
            x.len(),
            treated.len()
        )));
    }
    let fit = fit_logistic(x, treated, false, false, seed)?;
    let propensity: Vec<f64> = x.iter().map(|row| fit.prob(row)).collect();

    let mut treated_rows: Vec<usize> =
        treated.iter().enumerate().filter(|(_, &t)| t == 1).map(|(i, _)| i).collect();
    treated_rows.sort_by(|&a, &b| {
        propensity[b].partial_cmp(&propensity[a]).unwrap().then(a.cmp(&b))
    });
    let mut pool: Vec<usize> =
        treated.iter().enumerate().filter(|(_, &t)| t == 0).map(|(i, _)| i).collect();

    let mut pairs = Vec::with_capacity(treated_rows.len().min(pool.len()));
    let mut partial = false;
    for &t in &treated_rows {
        if pool.is_empty() {
            partial = true;
            break;
        }
        let mut best = 0;
        let mut best_dist = (propensity[t] - propensity[pool[0]]).abs();
        for (slot, &c) in pool.iter().enumerate().skip(1) {
            let dist = (propensity[t] - propensity[c]).abs();
            if dist < best_dist || (dist == best_dist && c < pool[best]) {
                best = slot;
                best_dist = dist;
            }
        }
        pairs.push((t, pool.remove(best)));
    }

    let p = x[0].len();
    let mut smds = Vec::with_capacity(p);
    for j in 0..p {
        let t_col: Vec<f64> = pairs.iter().map(|&(t, _)| x[t][j]).collect();
        let c_col: Vec<f64> = pairs.iter().map(|&(_, c)| x[c][j]).collect();
        smds.push(smd(&t_col, &c_col));
    }
    let flagged = smds
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > SMD_FLAG_THRESHOLD)
        .map(|(j, _)| j)
        .collect();

    Ok(MatchReport { pairs, smd: smds, flagged, partial })
}
