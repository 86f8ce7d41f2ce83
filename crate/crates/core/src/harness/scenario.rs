//! Scenario instances and noise conventions.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::channel::{PhysicalConstants, UserState};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::geometry::SubarrayLayout;
use crate::slow_opt::{random_rotation, PoseSpace};

/// A drawn user population together with everything derived from the
/// scenario configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub consts: PhysicalConstants,
    /// Antenna layout of one PA subarray.
    pub layout: SubarrayLayout,
    pub codebook: Codebook,
    pub weights: Vec<f64>,
    pub space: PoseSpace,
    /// Ground-truth users with their initial rotations.
    pub users: Vec<UserState>,
}

/// Noise power for which a unit-power isotropic link at `distance` sees
/// `snr_db`.
pub fn noise_power(consts: &PhysicalConstants, distance: f64, snr_db: f64) -> f64 {
    consts.path_loss(distance) / 10f64.powf(snr_db / 10.0)
}

/// Pilot-phase noise power: the weakest (farthest) user receives `snr_db`.
pub fn sensing_noise_power(consts: &PhysicalConstants, users: &[UserState], snr_db: f64) -> f64 {
    let far = users.iter().map(|u| u.distance).fold(0.0, f64::max);
    noise_power(consts, far, snr_db)
}

/// Distance with density proportional to `r^2` on `[r_min, r_max]`.
pub fn shell_distance(r_min: f64, r_max: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    (r_min.powi(3) + u * (r_max.powi(3) - r_min.powi(3))).cbrt()
}

pub fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * az.cos(), r * az.sin(), z)
}

/// Users uniform over the shell volume with uniform initial rotations.
pub fn generate_scenario(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Scenario> {
    cfg.validate()?;
    let lambda = cfg.lambda();
    let consts = PhysicalConstants {
        lambda,
        epsilon0: PhysicalConstants::friis_epsilon0(lambda),
        sigma2: 1.0,
        zeta: cfg.zeta,
    };
    let consts = PhysicalConstants {
        sigma2: noise_power(&consts, cfg.r_max, cfg.snr_db),
        ..consts
    };
    consts.validate()?;
    let users = (0..cfg.users)
        .map(|_| {
            let f = random_direction(rng);
            let d = shell_distance(cfg.r_min, cfg.r_max, rng);
            UserState::at_position(&(f * d), random_rotation(rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario {
        config: cfg.clone(),
        consts,
        layout: SubarrayLayout::half_wavelength_upa(cfg.antennas_per_subarray, lambda)?,
        codebook: Codebook::new(cfg.amp_bits, cfg.phase_bits)?,
        weights: cfg.weights(),
        space: PoseSpace {
            subarrays: cfg.subarrays,
            side: cfg.cube_side,
            d_min: cfg.d_min(),
        },
        users,
    })
}

/// Turns a location estimate into a user state, pulling the range into the
/// coverage shell.
pub fn sensed_user(cfg: &ScenarioConfig, position: &Vector3<f64>) -> Result<UserState> {
    let d = position.norm();
    if !d.is_finite() || d == 0.0 {
        return Err(Error::Unobservable(format!("location estimate {position:?}")));
    }
    let clamped = position * (d.clamp(cfg.r_min, cfg.r_max) / d);
    UserState::at_position(&clamped, crate::geometry::RotationAngles::ZERO)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub positions: Vec<Vector3<f64>>,
    pub sigma2: f64,
    pub lambda: f64,
}

impl Scenario {
    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            positions: self.users.iter().map(|u| u.position()).collect(),
            sigma2: self.consts.sigma2,
            lambda: self.consts.lambda,
        }
    }
}
