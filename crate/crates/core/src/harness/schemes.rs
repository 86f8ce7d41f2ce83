//! The proposed design and its three reference schemes.

use std::f64::consts::TAU;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use crate::channel::{GainPattern, PhysicalConstants, UserState};
use crate::codebook::Codebook;
use crate::error::Result;
use crate::fast_opt::{mrt_precoders, pdd_solve, FastInstance, PddConfig};
use crate::geometry::{RotationAngles, SubarrayLayout, SubarrayPose};
use crate::slow_opt::{ChannelSample, PoseObjective};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Three fixed sectors, random fixed polarforming, MRT.
    Fixed,
    /// Sector geometry with optimized polarforming and precoders.
    PolarformingOnly,
    /// Optimized subarray poses with the fixed scheme's polarforming and
    /// MRT.
    PositionOnly,
    /// Optimized poses, polarforming and precoders.
    TtPpr,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Fixed,
        Scheme::PolarformingOnly,
        Scheme::PositionOnly,
        Scheme::TtPpr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Fixed => "fixed",
            Scheme::PolarformingOnly => "polarforming_only",
            Scheme::PositionOnly => "position_only",
            Scheme::TtPpr => "tt_ppr",
        }
    }

    /// Whether the scheme searches subarray poses.
    pub fn moves_antennas(&self) -> bool {
        matches!(self, Scheme::PositionOnly | Scheme::TtPpr)
    }

    /// Whether polarforming and precoders are optimized per interval.
    pub fn optimizes_polarforming(&self) -> bool {
        matches!(self, Scheme::PolarformingOnly | Scheme::TtPpr)
    }
}

/// Number of sectors of the fixed BS.
pub const SECTORS: usize = 3;

/// Sector poses at 120 degree azimuth spacing, horizontal boresight, a
/// quarter cube side from the centre.
pub fn sector_poses(cube_side: f64) -> Vec<SubarrayPose> {
    (0..SECTORS)
        .map(|s| {
            let az = TAU * s as f64 / SECTORS as f64;
            let n = Vector3::new(az.cos(), az.sin(), 0.0);
            SubarrayPose::new(n * (cube_side / 4.0), RotationAngles::facing(&n, 0.0))
        })
        .collect()
}

/// Sector layout carrying `ceil(N B / 3)` antennas.
pub fn sector_layout(scenario: &Scenario) -> Result<SubarrayLayout> {
    let total = scenario.config.subarrays * scenario.config.antennas_per_subarray;
    SubarrayLayout::half_wavelength_upa(total.div_ceil(SECTORS), scenario.consts.lambda)
}

/// Randomly drawn codebook polarforming that is kept for the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPolarforming {
    pub w: Vec<Vector2<C64>>,
    pub v: Vec<Vector2<C64>>,
}

pub fn random_codeword_vector(cb: &Codebook, rng: &mut impl Rng) -> Vector2<C64> {
    let words: Vec<C64> = cb.codewords().collect();
    Vector2::new(
        words[rng.random_range(0..words.len())],
        words[rng.random_range(0..words.len())],
    )
}

impl FixedPolarforming {
    pub fn random(cb: &Codebook, users: usize, subarrays: usize, rng: &mut impl Rng) -> Self {
        let w = (0..users).map(|_| random_codeword_vector(cb, rng)).collect();
        let v = (0..subarrays).map(|_| random_codeword_vector(cb, rng)).collect();
        Self { w, v }
    }
}

/// Channel constants needed to build a fast-timescale instance.
#[derive(Debug, Clone, Copy)]
pub struct LinkModel<'a> {
    pub layout: &'a SubarrayLayout,
    pub consts: &'a PhysicalConstants,
    pub gain: &'a GainPattern,
    pub weights: &'a [f64],
}

impl LinkModel<'_> {
    pub fn instance(&self, users: &[UserState], poses: &[SubarrayPose]) -> Result<FastInstance> {
        FastInstance::from_geometry(users, poses, self.layout, self.consts, self.gain, self.weights.to_vec())
    }
}

/// Per-user rates of fixed polarforming with equal-power MRT.
pub fn mrt_rates(inst: &FastInstance, w: &[Vector2<C64>], v: &[Vector2<C64>]) -> Vec<f64> {
    let c = mrt_precoders(&inst.channels(w, v), inst.zeta());
    inst.rates(w, v, &c)
}

/// Pose objective of the proposed design: weighted rate after a
/// fast-timescale solve.
pub struct PddObjective<'a> {
    pub link: LinkModel<'a>,
    pub codebook: &'a Codebook,
    pub cfg: PddConfig,
}

impl PoseObjective for PddObjective<'_> {
    fn sample_rate(&self, poses: &[SubarrayPose], sample: &ChannelSample) -> Result<f64> {
        let inst = self.link.instance(&sample.users, poses)?;
        Ok(pdd_solve(&inst, self.codebook, &self.cfg)?.diagnostics.weighted_rate)
    }
}

/// Pose objective with polarforming held fixed and MRT precoding.
pub struct MrtObjective<'a> {
    pub link: LinkModel<'a>,
    pub polarforming: &'a FixedPolarforming,
}

impl PoseObjective for MrtObjective<'_> {
    fn sample_rate(&self, poses: &[SubarrayPose], sample: &ChannelSample) -> Result<f64> {
        let inst = self.link.instance(&sample.users, poses)?;
        let rates = mrt_rates(&inst, &self.polarforming.w, &self.polarforming.v);
        Ok(inst.weighted_rate(&rates))
    }
}
