//! Least-squares range from channel magnitudes.
//!
//! A user at distance `d` produces `||h_m|| = sqrt(epsilon0 N g_m) / d` at
//! pose `m`. Fitting `1/d` in least squares gives
//! `d = sqrt(epsilon0 N) sum g_m / sum(||h_m|| sqrt(g_m))`.

use crate::error::{Error, Result};

/// Closed-form LS distance from per-pose channel norms and element gains.
pub fn estimate_distance(h_norms: &[f64], gains: &[f64], epsilon0: f64, n: usize) -> Result<f64> {
    if h_norms.len() != gains.len() || h_norms.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} channel norms for {} gains",
            h_norms.len(),
            gains.len()
        )));
    }
    if gains.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidInput(format!("gains must be non-negative: {gains:?}")));
    }
    let gsum: f64 = gains.iter().sum();
    if gsum == 0.0 {
        return Err(Error::Unobservable("all pose gains are zero".into()));
    }
    let den: f64 = h_norms.iter().zip(gains).map(|(h, g)| h * g.sqrt()).sum();
    if !(den > 0.0) {
        return Err(Error::Unobservable(
            "no channel energy at any pose with non-zero gain".into(),
        ));
    }
    Ok((epsilon0 * n as f64).sqrt() * gsum / den)
}

/// The LS cost being minimized, `sum_m (||h_m|| - sqrt(epsilon0 N g_m) / d)^2`.
pub fn range_cost(d: f64, h_norms: &[f64], gains: &[f64], epsilon0: f64, n: usize) -> f64 {
    let c = (epsilon0 * n as f64).sqrt();
    h_norms
        .iter()
        .zip(gains)
        .map(|(h, g)| (h - c * g.sqrt() / d).powi(2))
        .sum()
}
