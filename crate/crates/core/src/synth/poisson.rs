//! Homogeneous Poisson stream.

use rand::Rng;

use super::{Result, SynthError};

/// Event times of a rate-`rate` Poisson process on `[0, t_end)`, via
/// exponential inter-arrival gaps.
pub fn sample_poisson<R: Rng>(rate: f64, t_end: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(SynthError::BadRate(rate));
    }
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(SynthError::BadHorizon(t_end));
    }
    let mut times = Vec::new();
    if rate == 0.0 {
        return Ok(times);
    }
    let mut t = 0.0;
    loop {
        let u: f64 = rng.gen();
        t += -(1.0 - u).ln() / rate;
        if t >= t_end {
            break;
        }
        times.push(t);
    }
    Ok(times)
}
