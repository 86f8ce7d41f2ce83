//! Pilot/polarforming pattern and the received pilot tensors.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor3;
use crate::channel::{dual_pol_response, unpolarformed_los_channel, GainPattern, PhysicalConstants, UserState};
use crate::codebook::PolarformingVector;
use crate::error::{Error, Result};
use crate::geometry::{RotationAngles, SubarrayLayout, SubarrayPose};
use crate::C64;

/// First `k` columns of the unitary `l x l` DFT matrix, so `X^H X = I_k`.
pub fn dft_pilots(l: usize, k: usize) -> Result<DMatrix<C64>> {
    if k == 0 || l < k {
        return Err(Error::InvalidInput(format!(
            "need 1 <= K <= L for orthogonal pilots, got K={k}, L={l}"
        )));
    }
    let s = 1.0 / (l as f64).sqrt();
    Ok(DMatrix::from_fn(l, k, |r, c| {
        C64::from_polar(s, -TAU * (r * c) as f64 / l as f64)
    }))
}

/// User polarforming for pilot block `p` (0-based) of `blocks`.
///
/// The H element advances in phase at a user-specific rate
/// `(k mod (P-1)) + 1`, which keeps the `P x K` coefficient matrix at full
/// column rank for up to `P - 1` users.
pub fn pilot_polarforming(user: usize, p: usize, blocks: usize) -> PolarformingVector {
    let rate = if blocks > 1 { user % (blocks - 1) + 1 } else { 0 };
    let phase = TAU * (rate * p) as f64 / blocks as f64;
    PolarformingVector::receive([C64::new(FRAC_1_SQRT_2, 0.0), C64::from_polar(FRAC_1_SQRT_2, phase)])
        .expect("unit-modulus entries scaled by 1/sqrt(2)")
}

/// `m` training poses spread over the surface of a cube of side `side`,
/// each facing radially outward.
///
/// Directions follow a Fibonacci lattice on the sphere and are pushed out
/// to the cube surface along their own ray.
pub fn training_poses(m: usize, side: f64) -> Vec<SubarrayPose> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..m)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let az = golden * i as f64;
            let d = Vector3::new(r * az.cos(), r * az.sin(), z);
            let q = d * (0.5 * side / d.amax());
            SubarrayPose::new(q, RotationAngles::facing(&d, 0.0))
        })
        .collect()
}

/// Known pilots `X`, per-block user polarforming and the training poses
/// with their fixed BS polarforming.
#[derive(Debug, Clone)]
pub struct PilotPattern {
    pub x: DMatrix<C64>,
    /// `w[k][p]`: polarforming of user `k` in block `p`.
    pub w: Vec<Vec<PolarformingVector>>,
    pub poses: Vec<SubarrayPose>,
    pub v: PolarformingVector,
}

impl PilotPattern {
    pub fn new(k: usize, l: usize, p: usize, poses: Vec<SubarrayPose>) -> Result<Self> {
        if p == 0 || poses.is_empty() {
            return Err(Error::InvalidInput("need P >= 1 pilot blocks and M >= 1 poses".into()));
        }
        let x = dft_pilots(l, k)?;
        let w = (0..k)
            .map(|user| (0..p).map(|b| pilot_polarforming(user, b, p)).collect())
            .collect();
        let one = C64::new(1.0, 0.0);
        Ok(Self {
            x,
            w,
            poses,
            v: PolarformingVector::transmit([one, one])?,
        })
    }

    pub fn users(&self) -> usize {
        self.x.ncols()
    }

    pub fn slots(&self) -> usize {
        self.x.nrows()
    }

    pub fn blocks(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn num_poses(&self) -> usize {
        self.poses.len()
    }
}

/// Received pilot tensors plus the ground-truth factors behind them.
#[derive(Debug, Clone)]
pub struct PilotObservation {
    /// `Y_m`, one `L x N x P` tensor per training pose.
    pub tensors: Vec<Tensor3>,
    /// True `H_m` (K x N): row `k` is the unpolarformed channel of user `k`.
    pub h: Vec<DMatrix<C64>>,
    /// True `Omega_m` (P x K) of polarformed coefficients.
    pub omega: Vec<DMatrix<C64>>,
}

/// Simulates `Y_{m,p} = X diag(Omega_m[p,:]) H_m + W_{m,p}` with
/// circularly-symmetric Gaussian noise of power `sigma2` per entry.
///
/// Noise is drawn pose by pose in a fixed order, so two calls with equally
/// seeded generators see the same unit-power noise scaled by `sqrt(sigma2)`.
pub fn simulate_pilot_rx(
    users: &[UserState],
    pattern: &PilotPattern,
    layout: &SubarrayLayout,
    consts: &PhysicalConstants,
    gain: &GainPattern,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<PilotObservation> {
    let k = pattern.users();
    if users.len() != k {
        return Err(Error::InvalidInput(format!(
            "pilot pattern is for {k} users, scenario has {}",
            users.len()
        )));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise power {sigma2} must be >= 0")));
    }
    let (l, n, p) = (pattern.slots(), layout.len(), pattern.blocks());
    let v = pattern.v.as_vector();
    let noise_amp = (sigma2 / 2.0).sqrt();

    let mut out = PilotObservation {
        tensors: Vec::with_capacity(pattern.num_poses()),
        h: Vec::with_capacity(pattern.num_poses()),
        omega: Vec::with_capacity(pattern.num_poses()),
    };
    for pose in &pattern.poses {
        let mut h = DMatrix::zeros(k, n);
        let mut omega = DMatrix::zeros(p, k);
        for (ki, user) in users.iter().enumerate() {
            let row = unpolarformed_los_channel(user, pose, layout, consts, gain)?;
            h.row_mut(ki).copy_from(&row.transpose());
            let a = dual_pol_response(&pose.u, &user.rotation, user.theta, user.phi).a_complex();
            let va: Vector2<C64> = a.adjoint() * v;
            for (pi, w) in pattern.w[ki].iter().enumerate() {
                omega[(pi, ki)] = va.dotc(&w.as_vector());
            }
        }
        let mut y = Tensor3::from_factors(&pattern.x, &h, &omega);
        for li in 0..l {
            for ni in 0..n {
                for pi in 0..p {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    y[(li, ni, pi)] += C64::new(re, im) * noise_amp;
                }
            }
        }
        out.tensors.push(y);
        out.h.push(h);
        out.omega.push(omega);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 0.0125;

    fn consts() -> PhysicalConstants {
        PhysicalConstants {
            lambda: LAMBDA,
            epsilon0: 1.0,
            sigma2: 1.0,
            zeta: 1.0,
        }
    }

    fn users(rng: &mut impl Rng, k: usize) -> Vec<UserState> {
        (0..k)
            .map(|_| {
                let u = RotationAngles::new(
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.0..TAU),
                );
                UserState::new(
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(20.0..50.0),
                    u,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn pilots_are_semi_unitary() {
        let x = dft_pilots(8, 3).unwrap();
        let g = x.adjoint() * &x;
        assert!((g - DMatrix::<C64>::identity(3, 3)).norm() < 1e-14);
        assert!(dft_pilots(2, 3).is_err());
    }

    #[test]
    fn poses_sit_on_the_cube_facing_out() {
        for pose in training_poses(8, 1.0) {
            assert_abs_diff_eq!(pose.q.amax(), 0.5, epsilon = 1e-12);
            let n = pose.normal();
            assert!((n.cross(&pose.q)).norm() < 1e-12, "normal must be radial");
            assert!(n.dot(&pose.q) > 0.0);
        }
    }

    #[test]
    fn coefficient_matrix_has_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let us = users(&mut rng, 4);
        let pat = PilotPattern::new(4, 8, 8, training_poses(3, 1.0)).unwrap();
        let layout = SubarrayLayout::half_wavelength_upa(4, LAMBDA).unwrap();
        let obs = simulate_pilot_rx(&us, &pat, &layout, &consts(), &GainPattern::Isotropic, 0.0, &mut rng).unwrap();
        for om in &obs.omega {
            assert_eq!(om.rank(1e-9), 4);
        }
    }

    #[test]
    fn noiseless_single_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let us = users(&mut rng, 1);
        let pat = PilotPattern::new(1, 3, 1, training_poses(1, 1.0)).unwrap();
        let layout = SubarrayLayout::half_wavelength_upa(4, LAMBDA).unwrap();
        let obs = simulate_pilot_rx(&us, &pat, &layout, &consts(), &GainPattern::THREE_GPP, 0.0, &mut rng).unwrap();
        let eta = obs.omega[0][(0, 0)];
        let h = &obs.h[0];
        let y = &obs.tensors[0];
        for l in 0..3 {
            for n in 0..4 {
                let expect = pat.x[(l, 0)] * eta * h[(0, n)];
                assert!((y[(l, n, 0)] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn noise_power_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let us = users(&mut rng, 2);
        let pat = PilotPattern::new(2, 4, 50, training_poses(20, 1.0)).unwrap();
        let layout = SubarrayLayout::half_wavelength_upa(4, LAMBDA).unwrap();
        let sigma2 = 0.3;
        let clean = simulate_pilot_rx(
            &us,
            &pat,
            &layout,
            &consts(),
            &GainPattern::Isotropic,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let noisy = simulate_pilot_rx(
            &us,
            &pat,
            &layout,
            &consts(),
            &GainPattern::Isotropic,
            sigma2,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let mut energy = 0.0;
        let mut blocks = 0.0;
        for (c, y) in clean.tensors.iter().zip(&noisy.tensors) {
            let [l, n, p] = y.dims();
            for li in 0..l {
                for ni in 0..n {
                    for pi in 0..p {
                        energy += (y[(li, ni, pi)] - c[(li, ni, pi)]).norm_sqr();
                    }
                }
            }
            blocks += p as f64;
        }
        // per-block E||W||_F^2 = L N sigma2; 1000 blocks of 16 entries
        let per_block = energy / blocks;
        assert!((per_block / (4.0 * 4.0 * sigma2) - 1.0).abs() < 0.03, "{per_block}");
    }

    #[test]
    fn coefficients_scale_with_user_polarforming() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let us = users(&mut rng, 2);
        let layout = SubarrayLayout::half_wavelength_upa(4, LAMBDA).unwrap();
        let mut pat = PilotPattern::new(2, 2, 3, training_poses(2, 1.0)).unwrap();
        let base = simulate_pilot_rx(&us, &pat, &layout, &consts(), &GainPattern::Isotropic, 0.0, &mut rng).unwrap();
        for row in &mut pat.w {
            for w in row.iter_mut() {
                let c = w.coeffs();
                *w = PolarformingVector::receive([c[0] * 0.5, c[1] * 0.5]).unwrap();
            }
        }
        let half = simulate_pilot_rx(&us, &pat, &layout, &consts(), &GainPattern::Isotropic, 0.0, &mut rng).unwrap();
        for (a, b) in base.omega.iter().zip(&half.omega) {
            assert!((a * C64::from(0.5) - b).norm() < 1e-14);
        }
        for (a, b) in base.tensors.iter().zip(&half.tensors) {
            assert_abs_diff_eq!(
                4.0 * b.norm_squared(),
                a.norm_squared(),
                epsilon = 1e-12 * a.norm_squared()
            );
        }
    }
}
