//! Sinusoidal time encoding.

/// Fixed encoding of a (relative) time into `d` features: interleaved
/// `sin(t / w_j), cos(t / w_j)` with wavelengths `w_j = 10000^(j / (d/2))`,
/// covering quarter-scale up to multi-decade structure.
pub fn time_features(t: f64, d: usize) -> Vec<f64> {
    debug_assert!(d % 2 == 0 && d > 0);
    let half = d / 2;
    let mut out = Vec::with_capacity(d);
    for j in 0..half {
        let wavelength = 10000f64.powf(j as f64 / half as f64);
        let phase = t / wavelength;
        out.push(phase.sin());
        out.push(phase.cos());
    }
    out
}
