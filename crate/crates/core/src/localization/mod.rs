//! Polarforming-based user localization.
//!
//! Users transmit orthogonal pilots while cycling their polarforming
//! vectors; the BS visits `M` training poses. Each pose yields a trilinear
//! tensor whose PARAFAC factors separate the stable unpolarformed channels
//! from the polarformed coefficients. Directions come from MUSIC over the
//! stacked poses and distances from the channel magnitudes.

pub mod music;
pub mod parafac;
pub mod pilots;
pub mod range;
pub mod tensor;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{dual_pol_response, effective_gain, GainPattern, PhysicalConstants, UserState};
use crate::error::{Error, Result};
use crate::geometry::{RotationAngles, SubarrayLayout};
use crate::C64;

pub use music::{music_doa, DoaEstimate, MusicConfig, MusicSearch};
pub use parafac::{als_parafac, AlsConfig, AlsOutput};
pub use pilots::{simulate_pilot_rx, training_poses, PilotObservation, PilotPattern};
pub use range::estimate_distance;
pub use tensor::{khatri_rao, Tensor3};

/// Floor on the estimated signal share of a channel estimate's energy.
const MIN_ENERGY_RATIO: f64 = 0.25;

/// How the per-user complex scale left by PARAFAC is resolved before the
/// range fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Least-squares scale against the true channel. For verification only.
    Genie,
    /// Divide by the expected norm of the polarformed coefficient column,
    /// known from the pilot design. Phases stay unresolved across poses.
    EtaCalibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationConfig {
    pub als: AlsConfig,
    pub music: MusicConfig,
    pub calibration: Calibration,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            als: AlsConfig::default(),
            music: MusicConfig::default(),
            calibration: Calibration::Genie,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserEstimate {
    pub direction: Vector3<f64>,
    pub distance: f64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalizationOutput {
    pub users: Vec<UserEstimate>,
    /// Calibrated channel estimates per pose (K x N).
    pub h_hat: Vec<DMatrix<C64>>,
    pub als_iterations: Vec<usize>,
    pub als_converged: Vec<bool>,
    pub doa: DoaEstimate,
}

/// RMS norm of a user's polarformed coefficient column over random user
/// rotations and arrival directions, for the given pilot pattern.
///
/// Deterministic: uses its own fixed-seed generator.
pub fn eta_rms(pattern: &PilotPattern, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e7a);
    let v = pattern.v.as_vector();
    let mut acc = 0.0;
    let mut count = 0usize;
    for s in 0..samples {
        let pose = &pattern.poses[s % pattern.num_poses()];
        let k = s % pattern.users();
        let ur = random_rotation(&mut rng);
        let f = random_direction(&mut rng);
        let (theta, phi) = crate::geometry::spherical_angles(&f);
        let a = dual_pol_response(&pose.u, &ur, theta, phi).a_complex();
        let va = a.adjoint() * v;
        acc += pattern.w[k]
            .iter()
            .map(|w| va.dotc(&w.as_vector()).norm_sqr())
            .sum::<f64>();
        count += 1;
    }
    (acc / count as f64).sqrt()
}

pub(crate) fn random_rotation(rng: &mut impl Rng) -> RotationAngles {
    use std::f64::consts::TAU;
    RotationAngles::new(
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
    )
}

pub(crate) fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    use std::f64::consts::TAU;
    let z: f64 = rng.random_range(-1.0..1.0);
    let az: f64 = rng.random_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * az.cos(), r * az.sin(), z)
}

/// Runs ALS, calibration, MUSIC and the range fit on an observation.
///
/// The true factors in `obs` are only read in [`Calibration::Genie`] mode.
pub fn localize_from_observation(
    obs: &PilotObservation,
    pattern: &PilotPattern,
    layout: &SubarrayLayout,
    consts: &PhysicalConstants,
    gain: &GainPattern,
    cfg: &LocalizationConfig,
) -> Result<LocalizationOutput> {
    let mut h_hat = Vec::with_capacity(obs.tensors.len());
    let mut als_iterations = Vec::new();
    let mut als_converged = Vec::new();
    let n = layout.len();
    // Row energy of the raw estimate over its expected noise part N sigma^2.
    let mut energy_ratio = Vec::with_capacity(obs.tensors.len());
    for (m, y) in obs.tensors.iter().enumerate() {
        let out = als_parafac(y, &pattern.x, &cfg.als, m)?;
        als_iterations.push(out.iterations);
        als_converged.push(out.converged);
        let noise = n as f64 * out.noise_var;
        energy_ratio.push(
            out.h
                .row_iter()
                .map(|r| {
                    let e = r.norm_squared();
                    if e > 0.0 {
                        (e - noise).max(0.0) / e
                    } else {
                        0.0
                    }
                })
                .collect::<Vec<f64>>(),
        );
        h_hat.push(out.h);
    }

    match cfg.calibration {
        Calibration::Genie => {
            for (hm, truth) in h_hat.iter_mut().zip(&obs.h) {
                for k in 0..hm.nrows() {
                    let est = hm.row(k).transpose();
                    let ee = est.norm_squared();
                    let alpha = if ee > 0.0 {
                        est.dotc(&truth.row(k).transpose()) / ee
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    for z in hm.row_mut(k).iter_mut() {
                        *z *= alpha;
                    }
                }
            }
        }
        Calibration::EtaCalibrated => {
            let eta = eta_rms(pattern, 4096);
            for hm in &mut h_hat {
                hm.unscale_mut(eta);
            }
        }
    }
    let coherent = cfg.calibration == Calibration::Genie;
    let doa = music_doa(
        &h_hat,
        &pattern.poses,
        layout,
        consts.lambda,
        gain,
        &cfg.music,
        coherent,
    )?;

    let mut users = Vec::with_capacity(doa.directions.len());
    for (k, f) in doa.directions.iter().enumerate() {
        let gains: Vec<f64> = pattern.poses.iter().map(|p| effective_gain(&p.u, f, gain)).collect();
        // Noise inflates the raw row norm; the genie projection shrinks it
        // by the same cosine instead.
        let norms: Vec<f64> = h_hat
            .iter()
            .zip(&energy_ratio)
            .map(|(h, r)| {
                let c2 = r[k].max(MIN_ENERGY_RATIO);
                match cfg.calibration {
                    Calibration::Genie => h.row(k).norm() / c2.sqrt(),
                    Calibration::EtaCalibrated => h.row(k).norm() * c2.sqrt(),
                }
            })
            .collect();
        let distance = estimate_distance(&norms, &gains, consts.epsilon0, n)?;
        users.push(UserEstimate {
            direction: *f,
            distance,
            position: f * distance,
        });
    }
    Ok(LocalizationOutput {
        users,
        h_hat,
        als_iterations,
        als_converged,
        doa,
    })
}

/// Simulates the pilot phase and localizes every user.
#[allow(clippy::too_many_arguments)]
pub fn localize_users(
    users: &[UserState],
    pattern: &PilotPattern,
    layout: &SubarrayLayout,
    consts: &PhysicalConstants,
    gain: &GainPattern,
    sigma2: f64,
    cfg: &LocalizationConfig,
    rng: &mut impl Rng,
) -> Result<LocalizationOutput> {
    let obs = simulate_pilot_rx(users, pattern, layout, consts, gain, sigma2, rng)
        .map_err(|e| e.in_stage("pilot simulation"))?;
    localize_from_observation(&obs, pattern, layout, consts, gain, cfg)
}

/// Position errors `||p_hat - p||` per user.
pub fn position_errors(users: &[UserState], est: &[UserEstimate]) -> Result<Vec<f64>> {
    if users.len() != est.len() {
        return Err(Error::InvalidInput(format!(
            "{} users but {} estimates",
            users.len(),
            est.len()
        )));
    }
    Ok(users
        .iter()
        .zip(est)
        .map(|(u, e)| (u.position() - e.position).norm())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SubarrayLayout;

    const LAMBDA: f64 = 0.0125;

    fn setup(rng: &mut impl Rng, k: usize) -> (Vec<UserState>, PilotPattern, SubarrayLayout, PhysicalConstants) {
        let users = (0..k)
            .map(|_| {
                let f = random_direction(rng);
                let d = rng.random_range(20.0..200.0);
                UserState::at_position(&(f * d), random_rotation(rng)).unwrap()
            })
            .collect();
        let pattern = PilotPattern::new(k, 8, 8, training_poses(8, 1.0)).unwrap();
        let layout = SubarrayLayout::half_wavelength_upa(4, LAMBDA).unwrap();
        let consts = PhysicalConstants {
            lambda: LAMBDA,
            epsilon0: PhysicalConstants::friis_epsilon0(LAMBDA),
            sigma2: 1.0,
            zeta: 1.0,
        };
        (users, pattern, layout, consts)
    }

    #[test]
    fn genie_noiseless_reproduces_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (users, pattern, layout, consts) = setup(&mut rng, 4);
        let obs = simulate_pilot_rx(
            &users,
            &pattern,
            &layout,
            &consts,
            &GainPattern::THREE_GPP,
            0.0,
            &mut rng,
        )
        .unwrap();
        let out = localize_from_observation(
            &obs,
            &pattern,
            &layout,
            &consts,
            &GainPattern::THREE_GPP,
            &LocalizationConfig::default(),
        )
        .unwrap();
        for (u, e) in users.iter().zip(&out.users) {
            assert!(
                (e.distance / u.distance - 1.0).abs() < 1e-9,
                "{} vs {}",
                e.distance,
                u.distance
            );
            assert!((e.position - u.position()).norm() < 1e-6);
        }
    }

    #[test]
    fn eta_calibrated_noiseless_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (users, pattern, layout, consts) = setup(&mut rng, 3);
        let cfg = LocalizationConfig {
            calibration: Calibration::EtaCalibrated,
            ..LocalizationConfig::default()
        };
        let out = localize_users(
            &users,
            &pattern,
            &layout,
            &consts,
            &GainPattern::THREE_GPP,
            0.0,
            &cfg,
            &mut rng,
        )
        .unwrap();
        for (u, e) in users.iter().zip(&out.users) {
            assert!(e.direction.dot(&u.direction()) > (1f64).to_radians().cos());
            // the range inherits the unknown |eta| of this particular user
            assert!(e.distance > 0.2 * u.distance && e.distance < 5.0 * u.distance);
        }
    }

    #[test]
    fn eta_rms_is_deterministic_and_bounded() {
        let pattern = PilotPattern::new(2, 4, 4, training_poses(3, 1.0)).unwrap();
        let a = eta_rms(&pattern, 500);
        assert_eq!(a, eta_rms(&pattern, 500));
        // |v^H A w| <= ||v|| ||A|| ||w|| <= 1 * 2 * 1 per block
        assert!(a > 0.0 && a < 2.0 * 2.0);
    }
}
