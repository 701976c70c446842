//! Multivariate Hawkes process with exponential kernels.
//!
//! Intensity of type `k` given history H(t):
//! `lambda_k(t) = mu_k + sum_j sum_{t_i^j < t} alpha[k][j] exp(-beta[k][j] (t - t_i^j))`.
//! All excitation is non-negative, so between events every intensity decays
//! monotonically toward its baseline; Ogata's thinning can therefore use the
//! post-event intensity as its dominating rate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesSpec {
    /// Baseline rate per type.
    pub mu: Vec<f64>,
    /// `alpha[k][j]`: intensity jump of type `k` when a type-`j` event fires.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[k][j]`: decay rate of that excitation.
    pub beta: Vec<Vec<f64>>,
}

impl HawkesSpec {
    pub fn n_types(&self) -> usize {
        self.mu.len()
    }

    /// Checks shapes, signs, and stationarity (spectral radius of
    /// `alpha/beta` below one).
    pub fn validate(&self) -> Result<()> {
        let k = self.n_types();
        if k == 0 {
            return Err(SynthError::Invalid("at least one event type is required".into()));
        }
        for &m in &self.mu {
            if !m.is_finite() || m < 0.0 {
                return Err(SynthError::BadRate(m));
            }
        }
        for rows in [&self.alpha, &self.beta] {
            if rows.len() != k {
                return Err(SynthError::Ragged { expect: k, got: rows.len() });
            }
            for row in rows.iter() {
                if row.len() != k {
                    return Err(SynthError::Ragged { expect: k, got: row.len() });
                }
            }
        }
        let mut branching = vec![vec![0.0f64; k]; k];
        for i in 0..k {
            for j in 0..k {
                let (a, b) = (self.alpha[i][j], self.beta[i][j]);
                if !a.is_finite() || a < 0.0 {
                    return Err(SynthError::NegativeExcitation(a));
                }
                if a > 0.0 && (!b.is_finite() || b <= 0.0) {
                    return Err(SynthError::BadDecay { alpha: a, beta: b });
                }
                branching[i][j] = if a > 0.0 { a / b } else { 0.0 };
            }
        }
        let radius = spectral_radius(&branching);
        if radius >= 1.0 {
            return Err(SynthError::NonStationary(radius));
        }
        Ok(())
    }
}

/// Largest-magnitude eigenvalue of a non-negative matrix, by power
/// iteration from the all-ones vector.
fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let mut v = vec![1.0f64; k];
    let mut radius = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0f64; k];
        for i in 0..k {
            for j in 0..k {
                next[i] += m[i][j] * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        radius = norm;
        for x in &mut next {
            *x /= norm;
        }
        v = next;
    }
    radius
}

/// Expected long-run rate per type: `(I - alpha/beta)^-1 mu`.
pub fn stationary_rates(spec: &HawkesSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.n_types();
    // Solve (I - G) x = mu by Gaussian elimination with partial pivoting.
    let mut a = vec![vec![0.0f64; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            let g = if spec.alpha[i][j] > 0.0 { spec.alpha[i][j] / spec.beta[i][j] } else { 0.0 };
            a[i][j] = if i == j { 1.0 - g } else { -g };
        }
        a[i][k] = spec.mu[i];
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
        a.swap(col, pivot);
        if a[col][col].abs() < 1e-12 {
            return Err(SynthError::Invalid("singular branching system".into()));
        }
        for row in 0..k {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            for j in col..=k {
                a[row][j] -= f * a[col][j];
            }
        }
    }
    Ok((0..k).map(|i| a[i][k] / a[i][i]).collect())
}

/// Exponentially decaying excitation kept in recursive form: one
/// accumulator per (target, source) kernel.
#[derive(Debug, Clone)]
struct ExcitationState {
    /// `s[k][j]` = current excitation of type `k` contributed by past
    /// type-`j` events, valued at `self.t`.
    s: Vec<Vec<f64>>,
    t: f64,
}

impl ExcitationState {
    fn new(k: usize) -> Self {
        ExcitationState { s: vec![vec![0.0; k]; k], t: 0.0 }
    }

    fn decay_to(&mut self, spec: &HawkesSpec, t: f64) {
        let dt = t - self.t;
        for (k, row) in self.s.iter_mut().enumerate() {
            for (j, s) in row.iter_mut().enumerate() {
                if *s > 0.0 {
                    *s *= (-spec.beta[k][j] * dt).exp();
                }
            }
        }
        self.t = t;
    }

    fn jump(&mut self, spec: &HawkesSpec, source: usize) {
        for (k, row) in self.s.iter_mut().enumerate() {
            row[source] += spec.alpha[k][source];
        }
    }

    fn intensity(&self, spec: &HawkesSpec, k: usize) -> f64 {
        spec.mu[k] + self.s[k].iter().sum::<f64>()
    }

    fn intensities(&self, spec: &HawkesSpec) -> Vec<f64> {
        (0..spec.n_types()).map(|k| self.intensity(spec, k)).collect()
    }
}

/// Samples one realization on `[0, t_end)` by Ogata's modified thinning.
/// Returns `(time, type)` pairs in time order.
pub fn sample_hawkes<R: Rng>(spec: &HawkesSpec, t_end: f64, rng: &mut R) -> Result<Vec<(f64, usize)>> {
    spec.validate()?;
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(SynthError::BadHorizon(t_end));
    }
    let k = spec.n_types();
    let mut state = ExcitationState::new(k);
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        // Between events every intensity decays, so the current total
        // dominates the process until the next accepted point.
        let lambda_bar: f64 = state.intensities(spec).iter().sum();
        if lambda_bar <= 0.0 {
            break;
        }
        let w = -(1.0 - rng.gen::<f64>()).ln() / lambda_bar;
        t += w;
        if t >= t_end {
            break;
        }
        state.decay_to(spec, t);
        let lambdas = state.intensities(spec);
        let total: f64 = lambdas.iter().sum();
        let u: f64 = rng.gen();
        if u * lambda_bar <= total {
            // Accepted: pick the type proportionally to its intensity.
            let mut pick = u * lambda_bar;
            let mut chosen = k - 1;
            for (i, &l) in lambdas.iter().enumerate() {
                if pick < l {
                    chosen = i;
                    break;
                }
                pick -= l;
            }
            state.jump(spec, chosen);
            events.push((t, chosen));
        }
    }
    Ok(events)
}

fn check_events(spec: &HawkesSpec, events: &[(f64, usize)], t_end: f64) -> Result<()> {
    let k = spec.n_types();
    for (i, &(t, ty)) in events.iter().enumerate() {
        if ty >= k {
            return Err(SynthError::BadType { got: ty, k });
        }
        if !(0.0..=t_end).contains(&t) {
            return Err(SynthError::OutOfWindow { t, t_end });
        }
        if i > 0 && t < events[i - 1].0 {
            return Err(SynthError::Unsorted(i));
        }
    }
    Ok(())
}

/// Per-type intensities at time `t` given the events strictly before `t`.
pub fn hawkes_intensities(spec: &HawkesSpec, events: &[(f64, usize)], t: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    check_events(spec, events, f64::INFINITY)?;
    let mut state = ExcitationState::new(spec.n_types());
    for &(ti, ty) in events.iter().take_while(|&&(ti, _)| ti < t) {
        state.decay_to(spec, ti);
        state.jump(spec, ty);
    }
    state.decay_to(spec, t);
    Ok(state.intensities(spec))
}

/// Exact log-likelihood of an event stream on `[0, t_end]`:
/// `sum_i log lambda_{k_i}(t_i) - sum_k integral_0^T lambda_k`, with the
/// compensator in closed form thanks to the exponential kernels.
pub fn hawkes_loglik(spec: &HawkesSpec, events: &[(f64, usize)], t_end: f64) -> Result<f64> {
    spec.validate()?;
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(SynthError::BadHorizon(t_end));
    }
    check_events(spec, events, t_end)?;
    let k = spec.n_types();

    let mut state = ExcitationState::new(k);
    let mut log_term = 0.0f64;
    for &(t, ty) in events {
        state.decay_to(spec, t);
        let lambda = state.intensity(spec, ty);
        if lambda <= 0.0 {
            return Err(SynthError::Invalid(format!("zero intensity for observed type {ty} at t = {t}")));
        }
        log_term += lambda.ln();
        state.jump(spec, ty);
    }

    let mut compensator: f64 = spec.mu.iter().map(|m| m * t_end).sum();
    for &(t, ty) in events {
        for target in 0..k {
            let a = spec.alpha[target][ty];
            if a > 0.0 {
                let b = spec.beta[target][ty];
                compensator += a / b * (1.0 - (-b * (t_end - t)).exp());
            }
        }
    }
    Ok(log_term - compensator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::synth::{ks_critical, ks_exp};
    use approx::assert_relative_eq;

    fn two_type_spec() -> HawkesSpec {
        HawkesSpec {
            mu: vec![0.4, 0.2],
            alpha: vec![vec![0.3, 0.1], vec![0.5, 0.2]],
            beta: vec![vec![1.2, 0.9], vec![2.0, 1.1]],
        }
    }

    #[test]
    fn validate_catches_bad_specs() {
        let mut s = two_type_spec();
        s.alpha[0][1] = -0.1;
        assert!(matches!(s.validate(), Err(SynthError::NegativeExcitation(_))));

        let mut s = two_type_spec();
        s.beta[1][0] = 0.0;
        assert!(matches!(s.validate(), Err(SynthError::BadDecay { .. })));

        let s = HawkesSpec { mu: vec![1.0], alpha: vec![vec![2.0]], beta: vec![vec![1.0]] };
        assert!(matches!(s.validate(), Err(SynthError::NonStationary(_))));

        let mut s = two_type_spec();
        s.alpha.pop();
        assert!(matches!(s.validate(), Err(SynthError::Ragged { .. })));
    }

    #[test]
    fn spectral_radius_matches_hand_eigenvalue() {
        // [[0.5, 0.2], [0.1, 0.4]] has eigenvalues (0.9 +/- sqrt(0.09))/2.
        let r = spectral_radius(&[vec![0.5, 0.2], vec![0.1, 0.4]]);
        let expect = (0.9 + 0.09f64.sqrt()) / 2.0;
        assert_relative_eq!(r, expect, epsilon = 1e-9);
    }

    #[test]
    fn loglik_of_empty_stream_is_minus_baseline_mass() {
        let spec = two_type_spec();
        let ll = hawkes_loglik(&spec, &[], 10.0).unwrap();
        assert_relative_eq!(ll, -(0.4 + 0.2) * 10.0, epsilon = 1e-12);
    }

    #[test]
    fn loglik_of_single_event_matches_hand_formula() {
        let spec = two_type_spec();
        let t1 = 2.5;
        let t_end = 10.0;
        let ll = hawkes_loglik(&spec, &[(t1, 0)], t_end).unwrap();
        // log mu_0 - mu mass - excitation mass from the one type-0 event.
        let mut expect = spec.mu[0].ln() - (spec.mu[0] + spec.mu[1]) * t_end;
        for target in 0..2 {
            let (a, b) = (spec.alpha[target][0], spec.beta[target][0]);
            expect -= a / b * (1.0 - (-b * (t_end - t1)).exp());
        }
        assert_relative_eq!(ll, expect, epsilon = 1e-12);
    }

    #[test]
    fn loglik_matches_quadrature_on_sampled_stream() {
        // Independent oracle: trapezoid compensator + direct intensity sums.
        let spec = two_type_spec();
        let t_end = 50.0;
        let mut rng = derive_rng(31, "hawkes-quad");
        let events = sample_hawkes(&spec, t_end, &mut rng).unwrap();
        assert!(events.len() > 20, "stream too short ({})", events.len());

        let n_grid = 20000;
        let mut compensator = 0.0f64;
        let mut prev: f64 = hawkes_intensities(&spec, &events, 0.0).unwrap().iter().sum();
        for g in 1..=n_grid {
            let t = t_end * g as f64 / n_grid as f64;
            let cur: f64 = hawkes_intensities(&spec, &events, t).unwrap().iter().sum();
            compensator += 0.5 * (prev + cur) * (t_end / n_grid as f64);
            prev = cur;
        }
        let mut log_term = 0.0f64;
        for &(t, ty) in &events {
            log_term += hawkes_intensities(&spec, &events, t).unwrap()[ty].ln();
        }
        let oracle = log_term - compensator;
        let exact = hawkes_loglik(&spec, &events, t_end).unwrap();
        assert!((oracle - exact).abs() / exact.abs() < 1e-3, "oracle {oracle} vs exact {exact}");
    }

    #[test]
    fn sampler_event_rate_matches_stationary_solution() {
        let spec = two_type_spec();
        let rates = stationary_rates(&spec).unwrap();
        let t_end = 2000.0;
        let mut rng = derive_rng(31, "hawkes-rate");
        let events = sample_hawkes(&spec, t_end, &mut rng).unwrap();
        for k in 0..2 {
            let observed = events.iter().filter(|&&(_, ty)| ty == k).count() as f64 / t_end;
            let expect = rates[k];
            let rel = (observed - expect).abs() / expect;
            assert!(rel < 0.08, "type {k}: observed {observed:.3} vs stationary {expect:.3}");
        }
    }

    #[test]
    fn stationary_rates_match_hand_solution_univariate() {
        // mu / (1 - alpha/beta).
        let spec = HawkesSpec { mu: vec![0.5], alpha: vec![vec![0.6]], beta: vec![vec![1.0]] };
        let r = stationary_rates(&spec).unwrap();
        assert_relative_eq!(r[0], 0.5 / (1.0 - 0.6), epsilon = 1e-12);
    }

    #[test]
    fn pure_poisson_case_gaps_are_exponential() {
        // With no excitation the sampler must reduce to a Poisson process.
        let spec = HawkesSpec { mu: vec![1.7], alpha: vec![vec![0.0]], beta: vec![vec![1.0]] };
        let mut rng = derive_rng(31, "hawkes-poisson");
        let events = sample_hawkes(&spec, 4000.0, &mut rng).unwrap();
        let gaps: Vec<f64> = events.windows(2).map(|w| w[1].0 - w[0].0).collect();
        assert!(ks_exp(&gaps, 1.7) < ks_critical(gaps.len(), 0.01));
    }

    #[test]
    fn time_rescaling_gives_unit_exponential_gaps() {
        // Transforming event times through the fitted compensator must yield
        // Exp(1) gaps; checks sampler and compensator against each other.
        let spec = two_type_spec();
        let mut rng = derive_rng(31, "hawkes-rescale");
        let mut gaps = Vec::new();
        for _ in 0..20 {
            let events = sample_hawkes(&spec, 200.0, &mut rng).unwrap();
            // Total-process compensator between consecutive events.
            let mut state = ExcitationState::new(2);
            let mut prev_t = 0.0f64;
            for &(t, ty) in &events {
                // Integral of total intensity over (prev_t, t).
                let mut mass: f64 = spec.mu.iter().sum::<f64>() * (t - prev_t);
                for (k, row) in state.s.iter().enumerate() {
                    for (j, &s) in row.iter().enumerate() {
                        if s > 0.0 {
                            let b = spec.beta[k][j];
                            mass += s / b * (1.0 - (-b * (t - prev_t)).exp());
                        }
                    }
                }
                gaps.push(mass);
                state.decay_to(&spec, t);
                state.jump(&spec, ty);
                prev_t = t;
            }
        }
        assert!(gaps.len() > 3000);
        let d = ks_exp(&gaps, 1.0);
        assert!(d < ks_critical(gaps.len(), 0.01), "D = {d}");
    }

    #[test]
    fn unsorted_or_out_of_range_events_are_rejected() {
        let spec = two_type_spec();
        assert!(matches!(hawkes_loglik(&spec, &[(2.0, 0), (1.0, 1)], 10.0), Err(SynthError::Unsorted(_))));
        assert!(matches!(hawkes_loglik(&spec, &[(1.0, 5)], 10.0), Err(SynthError::BadType { .. })));
        assert!(matches!(hawkes_loglik(&spec, &[(11.0, 0)], 10.0), Err(SynthError::OutOfWindow { .. })));
    }
}
