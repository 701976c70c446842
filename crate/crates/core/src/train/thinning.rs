//! Ogata-style thinning for drawing the next event from a set of
//! per-type intensity functions.

use rand::Rng;

use super::{Result, TrainError};
use crate::synth::sample_exp;

pub const THINNING_MAX_REJECTS: usize = 50;

/// Per-type intensities as a function of absolute time. Implementations
/// must return one non-negative rate per event type, in type order.
pub trait IntensityEval {
    fn rates(&self, t: f64) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextEvent {
    /// Gap from the last observed event to the drawn one.
    pub dt: f64,
    /// Zero-based index into the rate vector; vocabulary type id is
    /// `type_index + 1`.
    pub type_index: usize,
    /// Set when the rejection budget ran out; the returned point is the
    /// final proposal and downstream should treat it as censoring.
    pub exhausted: bool,
    /// Proposals whose total intensity exceeded the dominating bound.
    pub violations: usize,
    /// Proposals drawn in total, accepted one included.
    pub proposals: usize,
}

/// Draws the next event after `t_last` by thinning a homogeneous proposal
/// process.
///
/// The dominating bound is `oversample` times the largest total intensity
/// over a ten-point probe grid spanning four times the median of
/// `recent_gaps` (one time unit when no usable gaps exist). Proposals
/// whose intensity beats the bound are counted in `violations` but still
/// treated normally, so a slightly leaky bound skews rather than aborts a
/// draw. After `max_rejects` rejections the final proposal is returned
/// flagged `exhausted`.
pub fn thinning_next<E: IntensityEval, R: Rng>(
    eval: &E,
    t_last: f64,
    recent_gaps: &[f64],
    oversample: f64,
    max_rejects: usize,
    rng: &mut R,
) -> Result<NextEvent> {
    if max_rejects == 0 {
        return Err(TrainError::BadConfig("max_rejects must be at least 1".into()));
    }
    if !(oversample.is_finite() && oversample > 0.0) {
        return Err(TrainError::BadConfig(format!("oversample {oversample} must be positive and finite")));
    }

    let mut sorted: Vec<f64> = recent_gaps.iter().copied().filter(|g| g.is_finite() && *g >= 0.0).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let span = if median > 0.0 { 4.0 * median } else { 4.0 };

    let mut peak = 0.0f64;
    for j in 0..=9 {
        let t = t_last + span * j as f64 / 9.0;
        let total: f64 = eval.rates(t).iter().sum();
        peak = peak.max(total);
    }
    let bound = oversample * peak;
    if !(bound.is_finite() && bound > 0.0) {
        return Err(TrainError::BadBound(bound));
    }

    let mut t = t_last;
    let mut violations = 0;
    let mut proposals = 0;
    loop {
        t += sample_exp(rng, bound);
        proposals += 1;
        let rates = eval.rates(t);
        let total: f64 = rates.iter().sum();
        let ratio = total / bound;
        if ratio > 1.0 {
            violations += 1;
        }
        let u: f64 = rng.gen();
        let accepted = total > 0.0 && u <= ratio;
        if accepted || proposals >= max_rejects {
            let type_index = pick_type(&rates, total, rng);
            return Ok(NextEvent { dt: t - t_last, type_index, exhausted: !accepted, violations, proposals });
        }
    }
}

/// Samples a type index proportional to `rates`, falling back to uniform
/// when the total is zero (the exhausted-proposal case).
fn pick_type<R: Rng>(rates: &[f64], total: f64, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    if total > 0.0 {
        let mut acc = 0.0;
        for (k, r) in rates.iter().enumerate() {
            acc += r;
            if u * total <= acc {
                return k;
            }
        }
        rates.len() - 1
    } else {
        ((u * rates.len() as f64) as usize).min(rates.len().saturating_sub(1))
    }
}
