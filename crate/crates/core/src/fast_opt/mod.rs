//! Fast-timescale design of user/BS polarforming and precoders.
//!
//! The weighted sum-rate problem is turned into its WMMSE form and the
//! discrete polarforming constraints are split off with auxiliary copies
//! `w_bar`, `v_bar`. Penalty dual decomposition then alternates block
//! coordinate descent on the augmented Lagrangian with dual/penalty updates.

pub mod blocks;
pub mod pdd;
pub mod wmmse;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::channel::{dual_pol_response, unpolarformed_los_channel, GainPattern, PhysicalConstants, UserState};
use crate::codebook::TRANSMIT_SCALE;
use crate::error::{Error, Result};
use crate::geometry::{SubarrayLayout, SubarrayPose};
use crate::C64;

pub use blocks::{
    augmented_lagrangian, inner_sweep, project_auxiliaries, update_bs_polarforming, update_equalizers,
    update_precoders, update_user_polarforming, update_weights,
};
pub use pdd::{
    initial_state, mrt_precoders, pdd_solve, pdd_solve_from, DualUpdate, PddConfig, PddDiagnostics, PddOutput,
};
pub use wmmse::{lmmse_equalizer, mse, mse_weight, user_rate};

/// Channel data of one coherence interval at fixed subarray poses.
///
/// `hlos[k][b]` is the unpolarformed channel of user `k` at subarray `b`
/// and `a[k][b]` its dual-polarized response with the BS transmit scale
/// folded in, so that block `b` of `h_k` is `hlos[k][b] * (v_b^H a[k][b] w_k)`
/// for raw codebook-domain vectors `v_b`, `w_k`.
#[derive(Debug, Clone)]
pub struct FastInstance {
    hlos: Vec<Vec<DVector<C64>>>,
    a: Vec<Vec<Matrix2<C64>>>,
    weights: Vec<f64>,
    sigma2: f64,
    zeta: f64,
}

impl FastInstance {
    pub fn new(
        hlos: Vec<Vec<DVector<C64>>>,
        a: Vec<Vec<Matrix2<C64>>>,
        weights: Vec<f64>,
        sigma2: f64,
        zeta: f64,
    ) -> Result<Self> {
        let k = hlos.len();
        if k == 0 || a.len() != k || weights.len() != k {
            return Err(Error::InvalidInput(format!(
                "need matching non-empty user lists: {} channels, {} responses, {} weights",
                k,
                a.len(),
                weights.len()
            )));
        }
        let b = hlos[0].len();
        let n = hlos[0].first().map_or(0, |h| h.len());
        if b == 0 || n == 0 {
            return Err(Error::InvalidInput("need at least one subarray and antenna".into()));
        }
        for (hk, ak) in hlos.iter().zip(&a) {
            if hk.len() != b || ak.len() != b || hk.iter().any(|h| h.len() != n) {
                return Err(Error::InvalidInput("ragged channel tables".into()));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput(format!("rate weights must be >= 0: {weights:?}")));
        }
        if !(sigma2 > 0.0) || !(zeta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "need sigma2 > 0 and zeta > 0, got {sigma2}, {zeta}"
            )));
        }
        Ok(Self {
            hlos,
            a,
            weights,
            sigma2,
            zeta,
        })
    }

    /// Builds the instance for users seen by subarrays at `poses`.
    pub fn from_geometry(
        users: &[UserState],
        poses: &[SubarrayPose],
        layout: &SubarrayLayout,
        consts: &PhysicalConstants,
        pattern: &GainPattern,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut hlos = Vec::with_capacity(users.len());
        let mut a = Vec::with_capacity(users.len());
        for user in users {
            let mut hk = Vec::with_capacity(poses.len());
            let mut ak = Vec::with_capacity(poses.len());
            for pose in poses {
                hk.push(unpolarformed_los_channel(user, pose, layout, consts, pattern)?);
                let resp = dual_pol_response(&pose.u, &user.rotation, user.theta, user.phi);
                ak.push(resp.a_complex() * C64::from(TRANSMIT_SCALE));
            }
            hlos.push(hk);
            a.push(ak);
        }
        Self::new(hlos, a, weights, consts.sigma2, consts.zeta)
    }

    pub fn users(&self) -> usize {
        self.hlos.len()
    }

    pub fn subarrays(&self) -> usize {
        self.hlos[0].len()
    }

    pub fn antennas_per_subarray(&self) -> usize {
        self.hlos[0][0].len()
    }

    /// Total BS antennas `N B`.
    pub fn antennas(&self) -> usize {
        self.subarrays() * self.antennas_per_subarray()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn hlos(&self, k: usize, b: usize) -> &DVector<C64> {
        &self.hlos[k][b]
    }

    pub fn response(&self, k: usize, b: usize) -> &Matrix2<C64> {
        &self.a[k][b]
    }

    /// Overall channel `h_k` for user vector `w` and BS vectors `v`.
    pub fn channel(&self, k: usize, w: &Vector2<C64>, v: &[Vector2<C64>]) -> DVector<C64> {
        let n = self.antennas_per_subarray();
        let mut h = DVector::zeros(self.antennas());
        for (b, vb) in v.iter().enumerate() {
            let g = vb.dotc(&(self.a[k][b] * w));
            h.rows_mut(b * n, n).copy_from(&(&self.hlos[k][b] * g));
        }
        h
    }

    pub fn channels(&self, w: &[Vector2<C64>], v: &[Vector2<C64>]) -> Vec<DVector<C64>> {
        (0..self.users()).map(|k| self.channel(k, &w[k], v)).collect()
    }

    /// `M_k` (NB x 2) with `h_k = M_k w_k`.
    pub fn user_factor(&self, k: usize, v: &[Vector2<C64>]) -> DMatrix<C64> {
        let n = self.antennas_per_subarray();
        let mut m = DMatrix::zeros(self.antennas(), 2);
        for (b, vb) in v.iter().enumerate() {
            let row = vb.adjoint() * self.a[k][b];
            for i in 0..n {
                for j in 0..2 {
                    m[(b * n + i, j)] = self.hlos[k][b][i] * row[(0, j)];
                }
            }
        }
        m
    }

    /// Per-user rates for the given vectors and precoders.
    pub fn rates(&self, w: &[Vector2<C64>], v: &[Vector2<C64>], c: &[DVector<C64>]) -> Vec<f64> {
        self.channels(w, v)
            .iter()
            .enumerate()
            .map(|(k, h)| user_rate(h, c, k, self.sigma2))
            .collect()
    }

    pub fn weighted_rate(&self, rates: &[f64]) -> f64 {
        rates.iter().zip(&self.weights).map(|(r, w)| r * w).sum()
    }
}

/// All primal, auxiliary and dual variables of the PDD iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastState {
    pub w: Vec<Vector2<C64>>,
    pub w_bar: Vec<Vector2<C64>>,
    pub v: Vec<Vector2<C64>>,
    pub v_bar: Vec<Vector2<C64>>,
    pub xi: Vec<C64>,
    pub eps: Vec<f64>,
    pub c: Vec<DVector<C64>>,
    pub t: Vec<Vector2<C64>>,
    pub t_bar: Vec<Vector2<C64>>,
    pub mu: f64,
}

impl FastState {
    /// `max(||w - w_bar||_inf, ||v - v_bar||_inf)` over all entries.
    pub fn violation(&self) -> f64 {
        let inf = |a: &[Vector2<C64>], b: &[Vector2<C64>]| {
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| (x - y).iter().map(|z| z.norm()).collect::<Vec<_>>())
                .fold(0.0, f64::max)
        };
        inf(&self.w, &self.w_bar).max(inf(&self.v, &self.v_bar))
    }

    pub fn power(&self) -> f64 {
        self.c.iter().map(|c| c.norm_squared()).sum()
    }
}
