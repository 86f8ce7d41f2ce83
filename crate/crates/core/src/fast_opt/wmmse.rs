//! Rate, MSE and the closed-form equalizer/weight updates.
//!
//! The estimate is `x_hat = xi * y`, so the MSE reads
//! `|xi|^2 (sum_j |h^H c_j|^2 + sigma2) - 2 Re{xi h^H c_k} + 1` and the
//! LMMSE equalizer is `(h^H c_k)^* / (sum_j |h^H c_j|^2 + sigma2)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::C64;

/// Received power `sum_j |h^H c_j|^2`.
fn total_power(h: &DVector<C64>, c: &[DVector<C64>]) -> f64 {
    c.iter().map(|cj| h.dotc(cj).norm_sqr()).sum()
}

/// Achievable rate of user `k` in bits/s/Hz.
pub fn user_rate(h: &DVector<C64>, c: &[DVector<C64>], k: usize, sigma2: f64) -> f64 {
    let signal = h.dotc(&c[k]).norm_sqr();
    let interference = total_power(h, c) - signal;
    (1.0 + signal / (interference.max(0.0) + sigma2)).log2()
}

pub fn mse(h: &DVector<C64>, c: &[DVector<C64>], k: usize, xi: C64, sigma2: f64) -> f64 {
    let total = total_power(h, c) + sigma2;
    xi.norm_sqr() * total - 2.0 * (xi * h.dotc(&c[k])).re + 1.0
}

pub fn lmmse_equalizer(h: &DVector<C64>, c: &[DVector<C64>], k: usize, sigma2: f64) -> C64 {
    h.dotc(&c[k]).conj() / (total_power(h, c) + sigma2)
}

/// `1/e`, the minimizer of `eps * e - ln(eps)`.
pub fn mse_weight(e: f64, user: usize) -> Result<f64> {
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::DegenerateMse { user, mse: e });
    }
    Ok(1.0 / e)
}
