//! Synthetic data generation: homogeneous Poisson streams, multivariate
//! Hawkes processes with exponential kernels, and a full clinical-style
//! cohort with planted downstream signal.

mod cohort;
mod hawkes;
mod poisson;

pub use cohort::{gen_cohort, read_cohort, write_cohort, CohortRow, CohortSpec};
pub use hawkes::{hawkes_intensities, hawkes_loglik, sample_hawkes, stationary_rates, HawkesSpec};
pub use poisson::sample_poisson;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("rate must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("kernel spec is ragged: expected {expect} entries, got {got}")]
    Ragged { expect: usize, got: usize },
    #[error("decay must be positive wherever excitation is, got alpha {alpha} with beta {beta}")]
    BadDecay { alpha: f64, beta: f64 },
    #[error("excitation must be non-negative, got {0}")]
    NegativeExcitation(f64),
    #[error("process is non-stationary: spectral radius {0:.4} >= 1")]
    NonStationary(f64),
    #[error("event stream is not sorted at position {0}")]
    Unsorted(usize),
    #[error("event type {got} out of range for {k} types")]
    BadType { got: usize, k: usize },
    #[error("event time {t} outside [0, {t_end}]")]
    OutOfWindow { t: f64, t_end: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Standard normal draw via Box-Muller.
pub fn sample_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Exponential draw with the given rate.
pub fn sample_exp<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

/// Kolmogorov-Smirnov statistic of `samples` against Exp(`rate`).
pub fn ks_exp(samples: &[f64], rate: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Large-sample KS critical value at significance `alpha`:
/// `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}
