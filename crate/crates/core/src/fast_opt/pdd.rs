//! Penalty dual decomposition driver.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::blocks::{augmented_lagrangian, inner_sweep, update_equalizers, update_precoders, update_weights};
use super::{FastInstance, FastState};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::C64;

/// Increment used for the user-side dual `t_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DualUpdate {
    /// `t_k += (w_k - w_bar_k) / mu`, mirroring the BS-side update.
    #[default]
    Difference,
    /// `t_k += (w_k - t_k) / mu`. Kept for comparison; it does not converge.
    PrimalMinusDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PddConfig {
    /// Inner loop stops when the relative decrease of the augmented
    /// Lagrangian drops below this.
    pub eps_in: f64,
    /// Outer loop stops when both constraint violations drop below this.
    pub eps_out: f64,
    /// Penalty shrink factor, `mu <- varpi mu`.
    pub varpi: f64,
    pub mu0: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub dual_update: DualUpdate,
}

impl Default for PddConfig {
    fn default() -> Self {
        Self {
            eps_in: 1e-4,
            eps_out: 1e-4,
            varpi: 0.7,
            mu0: 1.0,
            max_inner: 100,
            max_outer: 100,
            dual_update: DualUpdate::Difference,
        }
    }
}

impl PddConfig {
    /// Budget used for the many inner solves of a pose search.
    pub fn cheap() -> Self {
        Self {
            eps_in: 1e-3,
            eps_out: 1e-3,
            max_inner: 15,
            max_outer: 25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.varpi > 0.0 && self.varpi < 1.0) {
            return Err(Error::InvalidInput(format!(
                "varpi must lie in (0,1), got {}",
                self.varpi
            )));
        }
        if !(self.mu0 > 0.0) || !(self.eps_in > 0.0) || !(self.eps_out > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mu0, eps_in and eps_out must be positive: {self:?}"
            )));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::InvalidInput("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iteration history of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddDiagnostics {
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    /// Augmented Lagrangian after every inner sweep, grouped by outer
    /// iteration.
    pub lagrangian: Vec<Vec<f64>>,
    /// `max(||w - w_bar||_inf, ||v - v_bar||_inf)` after every outer
    /// iteration's inner loop.
    pub violation: Vec<f64>,
    /// Final per-user rates at the codebook-feasible vectors.
    pub rates: Vec<f64>,
    pub weighted_rate: f64,
}

#[derive(Debug, Clone)]
pub struct PddOutput {
    pub state: FastState,
    pub diagnostics: PddDiagnostics,
}

/// Maximum-ratio precoders sharing the power budget equally.
pub fn mrt_precoders(channels: &[DVector<C64>], zeta: f64) -> Vec<DVector<C64>> {
    let per_user = (zeta / channels.len() as f64).sqrt();
    channels
        .iter()
        .map(|h| {
            let n = h.norm();
            if n > 0.0 {
                h * C64::from(per_user / n)
            } else {
                DVector::zeros(h.len())
            }
        })
        .collect()
}

/// Starting point: codeword nearest to `(1/sqrt 2)[1, e^{j pi/4}]` for all
/// polarforming vectors, MRT precoders at full power, zero duals.
pub fn initial_state(inst: &FastInstance, cb: &Codebook, mu0: f64) -> Result<FastState> {
    let seed =
        Vector2::new(C64::new(1.0, 0.0), C64::from_polar(1.0, FRAC_PI_4)) * C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let x = cb.project_vector(&seed);
    let (k, b) = (inst.users(), inst.subarrays());
    let w = vec![x; k];
    let v = vec![x; b];
    let c = mrt_precoders(&inst.channels(&w, &v), inst.zeta());
    let mut st = FastState {
        w_bar: w.clone(),
        w,
        v_bar: v.clone(),
        v,
        xi: vec![C64::new(0.0, 0.0); k],
        eps: vec![1.0; k],
        c,
        t: vec![Vector2::zeros(); k],
        t_bar: vec![Vector2::zeros(); b],
        mu: mu0,
    };
    update_equalizers(inst, &mut st);
    update_weights(inst, &mut st)?;
    Ok(st)
}

/// Solves the fast-timescale problem from the default starting point.
pub fn pdd_solve(inst: &FastInstance, cb: &Codebook, cfg: &PddConfig) -> Result<PddOutput> {
    cfg.validate()?;
    let st = initial_state(inst, cb, cfg.mu0)?;
    pdd_solve_from(inst, cb, cfg, st)
}

/// Solves from a given state; `state.mu` is overwritten with `cfg.mu0`.
pub fn pdd_solve_from(inst: &FastInstance, cb: &Codebook, cfg: &PddConfig, mut st: FastState) -> Result<PddOutput> {
    cfg.validate()?;
    st.mu = cfg.mu0;
    let mut lagrangian = Vec::new();
    let mut violation = Vec::new();
    let mut inner_sweeps = 0;
    let mut converged = false;
    let mut outer = 0;
    while outer < cfg.max_outer {
        outer += 1;
        let mut trace = Vec::new();
        let mut last = augmented_lagrangian(inst, &st);
        for _ in 0..cfg.max_inner {
            let l = inner_sweep(inst, &mut st, cb)?[6];
            inner_sweeps += 1;
            trace.push(l);
            let drop = (last - l) / last.abs().max(1e-300);
            last = l;
            if drop < cfg.eps_in {
                break;
            }
        }
        lagrangian.push(trace);
        let viol = st.violation();
        violation.push(viol);
        if viol < cfg.eps_out {
            converged = true;
            break;
        }
        dual_step(&mut st, cfg.dual_update);
        st.mu *= cfg.varpi;
    }

    let rates = final_rates(inst, &mut st)?;
    let weighted_rate = inst.weighted_rate(&rates);
    Ok(PddOutput {
        state: st,
        diagnostics: PddDiagnostics {
            converged,
            outer_iterations: outer,
            inner_sweeps,
            lagrangian,
            violation,
            rates,
            weighted_rate,
        },
    })
}

/// Dual ascent on `t_k`, `t_bar_b` with step `1/mu`.
pub(crate) fn dual_step(st: &mut FastState, rule: DualUpdate) {
    let inv_mu = C64::from(1.0 / st.mu);
    for k in 0..st.w.len() {
        let inc = match rule {
            DualUpdate::Difference => st.w[k] - st.w_bar[k],
            DualUpdate::PrimalMinusDual => st.w[k] - st.t[k],
        };
        st.t[k] += inc * inv_mu;
    }
    for b in 0..st.v.len() {
        st.t_bar[b] += (st.v[b] - st.v_bar[b]) * inv_mu;
    }
}

/// Snaps the polarforming vectors to their codebook copies, refreshes the
/// precoders for them and returns the resulting rates.
fn final_rates(inst: &FastInstance, st: &mut FastState) -> Result<Vec<f64>> {
    st.w = st.w_bar.clone();
    st.v = st.v_bar.clone();
    update_equalizers(inst, st);
    update_weights(inst, st)?;
    let before = inst.rates(&st.w, &st.v, &st.c);
    let saved = st.c.clone();
    update_precoders(inst, st)?;
    let after = inst.rates(&st.w, &st.v, &st.c);
    // keep whichever precoders score higher on the actual objective
    if inst.weighted_rate(&after) >= inst.weighted_rate(&before) {
        Ok(after)
    } else {
        st.c = saved;
        Ok(before)
    }
}
