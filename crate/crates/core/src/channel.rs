//! Far-field LoS channel of a dual-polarized polarforming antenna link.
//!
//! The per-subarray channel factors into a stable *unpolarformed* part
//! (path loss, element gain, steering vector) and a scalar *polarformed*
//! part `v^H A w` that depends only on the polarforming vectors and on the
//! relative orientation of the two antennas.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::codebook::PolarformingVector;
use crate::error::{Error, Result};
use crate::geometry::{
    antenna_positions, pointing_vector, pointing_vector_unchecked, rotation_matrix, RotationAngles, SubarrayLayout,
    SubarrayPose,
};
use crate::C64;

/// V-element axis in an antenna's local frame.
pub const E_V: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);
/// H-element axis in an antenna's local frame.
pub const E_H: Vector3<f64> = Vector3::new(1.0, 0.0, 0.0);

/// Location and orientation of one single-antenna user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    /// Elevation of the arrival direction at the BS centre, radians.
    pub theta: f64,
    /// Azimuth of the arrival direction at the BS centre, radians.
    pub phi: f64,
    /// Distance to the BS centre, meters.
    pub distance: f64,
    /// Device rotation.
    pub rotation: RotationAngles,
}

impl UserState {
    pub fn new(theta: f64, phi: f64, distance: f64, rotation: RotationAngles) -> Result<Self> {
        pointing_vector(theta, phi)?;
        if !(distance > 1.0) {
            return Err(Error::ReferenceDistance(distance));
        }
        Ok(Self {
            theta,
            phi,
            distance,
            rotation,
        })
    }

    /// User at global position `p` (meters).
    pub fn at_position(p: &Vector3<f64>, rotation: RotationAngles) -> Result<Self> {
        let (theta, phi) = crate::geometry::spherical_angles(p);
        Self::new(theta, phi, p.norm(), rotation)
    }

    pub fn direction(&self) -> Vector3<f64> {
        pointing_vector_unchecked(self.theta, self.phi)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.direction() * self.distance
    }

    pub fn with_rotation(&self, rotation: RotationAngles) -> Self {
        Self { rotation, ..*self }
    }
}

/// Carrier and link-budget constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Carrier wavelength, meters.
    pub lambda: f64,
    /// Linear channel power gain at the 1 m reference distance.
    pub epsilon0: f64,
    /// Receiver noise power.
    pub sigma2: f64,
    /// Total BS transmit power.
    pub zeta: f64,
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("epsilon0", self.epsilon0),
            ("sigma2", self.sigma2),
            ("zeta", self.zeta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Free-space path loss `epsilon0 / d^2`.
    pub fn path_loss(&self, distance: f64) -> f64 {
        self.epsilon0 / (distance * distance)
    }

    /// Friis reference gain `(lambda / 4 pi)^2` at 1 m.
    pub fn friis_epsilon0(lambda: f64) -> f64 {
        (lambda / (4.0 * PI)).powi(2)
    }
}

/// Element radiation pattern of the BS antennas, with boresight along the
/// local +z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainPattern {
    Isotropic,
    /// 3GPP TR 38.901 element pattern.
    ThreeGpp {
        max_gain_dbi: f64,
        hpbw_deg: f64,
        max_attenuation_db: f64,
        side_lobe_db: f64,
    },
}

impl GainPattern {
    pub const THREE_GPP: Self = GainPattern::ThreeGpp {
        max_gain_dbi: 8.0,
        hpbw_deg: 65.0,
        max_attenuation_db: 30.0,
        side_lobe_db: 30.0,
    };

    /// Gain in dBi for a local-frame direction.
    pub fn gain_dbi(&self, theta_loc: f64, phi_loc: f64) -> f64 {
        self.gain_dbi_local(&pointing_vector_unchecked(theta_loc, phi_loc))
    }

    /// Gain in dBi for a unit direction already expressed in the local frame.
    pub fn gain_dbi_local(&self, f: &Vector3<f64>) -> f64 {
        match *self {
            GainPattern::Isotropic => 0.0,
            GainPattern::ThreeGpp {
                max_gain_dbi,
                hpbw_deg,
                max_attenuation_db,
                side_lobe_db,
            } => {
                // Pattern frame with boresight (local +z) on its x axis:
                // zenith angle measured from local y, azimuth in the z-x plane.
                let zenith = f.y.clamp(-1.0, 1.0).acos().to_degrees();
                let azimuth = f.x.atan2(f.z).to_degrees();
                let vertical = (12.0 * ((zenith - 90.0) / hpbw_deg).powi(2)).min(side_lobe_db);
                let horizontal = (12.0 * (azimuth / hpbw_deg).powi(2)).min(max_attenuation_db);
                max_gain_dbi - (vertical + horizontal).min(max_attenuation_db)
            }
        }
    }
}

/// Linear element gain `10^(A/10)` of a subarray with rotation `u` towards
/// the global unit direction `f`.
pub fn effective_gain(u: &RotationAngles, f: &Vector3<f64>, pattern: &GainPattern) -> f64 {
    if let GainPattern::Isotropic = pattern {
        return 1.0;
    }
    let local = rotation_matrix(u).transpose() * f;
    10f64.powf(pattern.gain_dbi_local(&local) / 10.0)
}

/// Steering vector `exp(-j 2pi/lambda f^T r_n)` of a subarray.
pub fn steering_vector(pose: &SubarrayPose, layout: &SubarrayLayout, f: &Vector3<f64>, lambda: f64) -> DVector<C64> {
    let k = 2.0 * PI / lambda;
    let pos = antenna_positions(pose, layout);
    DVector::from_iterator(pos.len(), pos.iter().map(|r| C64::from_polar(1.0, -k * f.dot(r))))
}

/// Unpolarformed LoS channel between a user and one subarray.
pub fn unpolarformed_los_channel(
    user: &UserState,
    pose: &SubarrayPose,
    layout: &SubarrayLayout,
    consts: &PhysicalConstants,
    pattern: &GainPattern,
) -> Result<DVector<C64>> {
    if !(user.distance > 1.0) {
        return Err(Error::ReferenceDistance(user.distance));
    }
    let f = user.direction();
    let nu = consts.path_loss(user.distance);
    let g = effective_gain(&pose.u, &f, pattern);
    let common = C64::from_polar((nu * g).sqrt(), -2.0 * PI * user.distance / consts.lambda);
    Ok(steering_vector(pose, layout, &f, consts.lambda) * common)
}

/// Transmit/receive field projections and their product `A = Q P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPolResponse {
    pub p: Matrix2<f64>,
    pub q: Matrix2<f64>,
}

impl DualPolResponse {
    pub fn a(&self) -> Matrix2<f64> {
        self.q * self.p
    }

    pub fn a_complex(&self) -> Matrix2<C64> {
        self.a().map(C64::from)
    }
}

/// Wavefront polarization basis `(z, z_bar)` for arrival direction
/// `(theta, phi)`.
pub fn polarization_basis(theta: f64, phi: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vector3::new(st * sp, -ct, st * cp), Vector3::new(cp, 0.0, -sp))
}

/// Dual-polarized response between a BS subarray with rotation `u_b` and a
/// user with rotation `u_r` seen from direction `(theta, phi)`.
pub fn dual_pol_response(u_b: &RotationAngles, u_r: &RotationAngles, theta: f64, phi: f64) -> DualPolResponse {
    let (z, zb) = polarization_basis(theta, phi);
    let rb = rotation_matrix(u_b);
    let (tv, th) = (rb * E_V, rb * E_H);
    let p = Matrix2::new(tv.dot(&z), th.dot(&z), tv.dot(&zb), th.dot(&zb));
    let rr = rotation_matrix(u_r);
    let (rv, rh) = (rr * E_V, rr * E_H);
    let q = Matrix2::new(z.dot(&rv), zb.dot(&rv), z.dot(&rh), zb.dot(&rh));
    DualPolResponse { p, q }
}

/// Scalar polarformed gain `v^H A w`.
pub fn polarformed_gain(a: &Matrix2<C64>, v: &Vector2<C64>, w: &Vector2<C64>) -> C64 {
    v.dotc(&(a * w))
}

/// Polarformed channel `h_unpol * (v^H A w)`; `v` and `w` are the vectors
/// that multiply the channel (BS scaling already applied).
pub fn polarformed_channel(
    h_unpol: &DVector<C64>,
    a: &Matrix2<C64>,
    v: &Vector2<C64>,
    w: &Vector2<C64>,
) -> DVector<C64> {
    h_unpol * polarformed_gain(a, v, w)
}

/// The same channel through its Kronecker form `(I_N (x) v^H)(h (x) A) w`.
pub fn polarformed_channel_kronecker(
    h_unpol: &DVector<C64>,
    a: &Matrix2<C64>,
    v: &Vector2<C64>,
    w: &Vector2<C64>,
) -> DVector<C64> {
    let n = h_unpol.len();
    let selector = DMatrix::<C64>::identity(n, n).kronecker(&v.adjoint());
    let a_dyn = DMatrix::from_column_slice(2, 2, a.as_slice());
    let h_bar = DMatrix::from_column_slice(n, 1, h_unpol.as_slice()).kronecker(&a_dyn);
    let w_dyn = DVector::from_column_slice(w.as_slice());
    selector * h_bar * w_dyn
}

/// Overall channel of one user across all subarrays, stacked subarray by
/// subarray.
pub fn stacked_channel(
    user: &UserState,
    poses: &[SubarrayPose],
    layout: &SubarrayLayout,
    v: &[PolarformingVector],
    w: &PolarformingVector,
    consts: &PhysicalConstants,
    pattern: &GainPattern,
) -> Result<DVector<C64>> {
    if poses.is_empty() || poses.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "{} poses but {} BS polarforming vectors",
            poses.len(),
            v.len()
        )));
    }
    let n = layout.len();
    let mut out = DVector::zeros(n * poses.len());
    let wv = w.as_vector();
    for (b, (pose, vb)) in poses.iter().zip(v).enumerate() {
        let h = unpolarformed_los_channel(user, pose, layout, consts, pattern)?;
        let a = dual_pol_response(&pose.u, &user.rotation, user.theta, user.phi).a_complex();
        out.rows_mut(b * n, n)
            .copy_from(&polarformed_channel(&h, &a, &vb.as_vector(), &wv));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::PolarformingVector;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    const LAMBDA: f64 = 0.0125;

    fn consts() -> PhysicalConstants {
        PhysicalConstants {
            lambda: LAMBDA,
            epsilon0: 1.0,
            sigma2: 1.0,
            zeta: 1.0,
        }
    }

    fn random_angles(rng: &mut impl Rng) -> RotationAngles {
        RotationAngles::new(
            rng.random_range(0.0..TAU),
            rng.random_range(0.0..TAU),
            rng.random_range(0.0..TAU),
        )
    }

    fn random_c(rng: &mut impl Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn steering_vector_examples() {
        let origin = SubarrayPose::new(Vector3::zeros(), RotationAngles::ZERO);
        let single = SubarrayLayout::new(vec![Vector3::zeros()]).unwrap();
        let a = steering_vector(&origin, &single, &Vector3::x(), LAMBDA);
        assert_eq!(a[0], C64::new(1.0, 0.0));

        let pair = SubarrayLayout::new(vec![Vector3::zeros(), Vector3::new(0.0, LAMBDA / 2.0, 0.0)]).unwrap();
        let a = steering_vector(&origin, &pair, &Vector3::y(), LAMBDA);
        assert_abs_diff_eq!(a[1].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gain_pattern_values() {
        let f = Vector3::new(0.3, -0.2, 0.9).normalize();
        assert_eq!(
            effective_gain(&RotationAngles::new(1.0, 2.0, 3.0), &f, &GainPattern::Isotropic),
            1.0
        );
        // boresight of an unrotated subarray is +z
        let g = effective_gain(&RotationAngles::ZERO, &Vector3::z(), &GainPattern::THREE_GPP);
        assert_abs_diff_eq!(g, 10f64.powf(0.8), epsilon = 1e-12);
        let g = effective_gain(&RotationAngles::ZERO, &-Vector3::z(), &GainPattern::THREE_GPP);
        assert_abs_diff_eq!(g, 10f64.powf(-2.2), epsilon = 1e-12);
        // -3 dB at half the beamwidth off boresight in the horizontal cut
        let off = 32.5f64.to_radians();
        let f = Vector3::new(off.sin(), 0.0, off.cos());
        let db = 10.0 * effective_gain(&RotationAngles::ZERO, &f, &GainPattern::THREE_GPP).log10();
        assert_abs_diff_eq!(db, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn unpolarformed_channel_scaling() {
        let user = UserState::new(0.2, 0.4, 1.0 + 1e-9, RotationAngles::ZERO).unwrap();
        let origin = SubarrayPose::new(Vector3::zeros(), RotationAngles::ZERO);
        let single = SubarrayLayout::new(vec![Vector3::zeros()]).unwrap();
        let h = unpolarformed_los_channel(&user, &origin, &single, &consts(), &GainPattern::Isotropic).unwrap();
        assert_abs_diff_eq!(h[0].norm(), 1.0, epsilon = 1e-8);

        let layout = SubarrayLayout::upa(4, LAMBDA / 2.0).unwrap();
        let pose = SubarrayPose::new(Vector3::new(0.1, -0.2, 0.3), RotationAngles::new(0.5, 1.0, 1.5));
        let near = UserState::new(0.2, 0.4, 30.0, RotationAngles::ZERO).unwrap();
        let far = UserState { distance: 60.0, ..near };
        let c = consts();
        let h1 = unpolarformed_los_channel(&near, &pose, &layout, &c, &GainPattern::THREE_GPP).unwrap();
        let h2 = unpolarformed_los_channel(&far, &pose, &layout, &c, &GainPattern::THREE_GPP).unwrap();
        assert_abs_diff_eq!(h2.norm_squared() * 4.0, h1.norm_squared(), epsilon = 1e-15);
        let g = effective_gain(&pose.u, &near.direction(), &GainPattern::THREE_GPP);
        let modulus = (c.path_loss(30.0) * g).sqrt();
        for e in h1.iter() {
            assert_abs_diff_eq!(e.norm(), modulus, epsilon = 1e-15);
        }
        assert!(UserState::new(0.0, 0.0, 1.0, RotationAngles::ZERO).is_err());
        let bad = UserState { distance: 0.5, ..near };
        assert!(matches!(
            unpolarformed_los_channel(&bad, &pose, &layout, &c, &GainPattern::Isotropic),
            Err(Error::ReferenceDistance(_))
        ));
    }

    #[test]
    fn dual_pol_unrotated_broadside() {
        let r = dual_pol_response(&RotationAngles::ZERO, &RotationAngles::ZERO, 0.0, 0.0);
        assert_abs_diff_eq!(r.p, Matrix2::new(-1.0, 0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(r.q, Matrix2::new(-1.0, 0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(r.a(), Matrix2::identity(), epsilon = 1e-15);
    }

    #[test]
    fn dual_pol_matches_entrywise_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let ub = random_angles(&mut rng);
            let ur = random_angles(&mut rng);
            let theta = rng.random_range(-1.5..1.5);
            let phi = rng.random_range(-3.1..3.1);
            let r = dual_pol_response(&ub, &ur, theta, phi);
            // independent evaluation from the columns of the rotation matrices
            let (st, ct) = (f64::sin(theta), f64::cos(theta));
            let (sp, cp) = (f64::sin(phi), f64::cos(phi));
            let z = [st * sp, -ct, st * cp];
            let zb = [cp, 0.0, -sp];
            let mb = rotation_matrix(&ub);
            let mr = rotation_matrix(&ur);
            let dot = |m: &nalgebra::Matrix3<f64>, col: usize, v: &[f64; 3]| -> f64 {
                (0..3).map(|i| m[(i, col)] * v[i]).sum()
            };
            let p = [[dot(&mb, 1, &z), dot(&mb, 0, &z)], [dot(&mb, 1, &zb), dot(&mb, 0, &zb)]];
            let q = [[dot(&mr, 1, &z), dot(&mr, 1, &zb)], [dot(&mr, 0, &z), dot(&mr, 0, &zb)]];
            let a = r.a();
            for i in 0..2 {
                for j in 0..2 {
                    let aij: f64 = (0..2).map(|l| q[i][l] * p[l][j]).sum();
                    assert_abs_diff_eq!(a[(i, j)], aij, epsilon = 1e-12);
                    assert!(r.p[(i, j)].abs() <= 1.0 + 1e-12);
                    assert!(r.q[(i, j)].abs() <= 1.0 + 1e-12);
                    assert!(a[(i, j)].abs() <= 1.0 + 1e-12);
                }
            }
            // invariance under adding 2pi
            let shifted = RotationAngles::new(ub.alpha() + TAU, ub.beta() - TAU, ub.gamma() + 2.0 * TAU);
            let r2 = dual_pol_response(&shifted, &ur, theta, phi);
            assert_abs_diff_eq!(r2.a(), a, epsilon = 1e-12);
        }
    }

    #[test]
    fn in_plane_rotations_give_orthogonal_response() {
        for gamma in [0.0, 0.3, 1.7, 4.0] {
            let u = RotationAngles::new(0.0, 0.0, gamma);
            let a = dual_pol_response(&u, &u, 0.0, 0.0).a();
            assert_abs_diff_eq!(a.transpose() * a, Matrix2::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn polarformed_channel_examples() {
        let h = DVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.1)]);
        let v = PolarformingVector::transmit([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let w = PolarformingVector::receive([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let out = polarformed_channel(&h, &Matrix2::identity(), &v.as_vector(), &w.as_vector());
        let s = v.as_vector().dotc(&w.as_vector());
        assert_abs_diff_eq!((out - &h * s).norm(), 0.0, epsilon = 1e-15);
        let zero = polarformed_channel(&h, &Matrix2::identity(), &v.as_vector(), &Vector2::zeros());
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn factored_form_equals_kronecker_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..6);
            let h = DVector::from_fn(n, |_, _| random_c(&mut rng));
            let a = Matrix2::from_fn(|_, _| random_c(&mut rng));
            let v = Vector2::new(random_c(&mut rng), random_c(&mut rng));
            let w = Vector2::new(random_c(&mut rng), random_c(&mut rng));
            let f = polarformed_channel(&h, &a, &v, &w);
            let k = polarformed_channel_kronecker(&h, &a, &v, &w);
            assert!((f - &k).norm() <= 1e-12 * k.norm().max(1e-300));
        }
    }

    #[test]
    fn stacked_channel_blocks() {
        let layout = SubarrayLayout::upa(4, LAMBDA / 2.0).unwrap();
        let c = consts();
        let user = UserState::new(0.1, 0.7, 25.0, RotationAngles::new(0.2, 0.3, 0.4)).unwrap();
        let poses = [
            SubarrayPose::new(Vector3::new(0.2, 0.0, 0.0), RotationAngles::facing(&Vector3::x(), 0.0)),
            SubarrayPose::new(Vector3::new(0.0, 0.2, 0.0), RotationAngles::facing(&Vector3::y(), 0.3)),
        ];
        let one = C64::new(1.0, 0.0);
        let v = [
            PolarformingVector::transmit([one, C64::new(0.0, 1.0)]).unwrap(),
            PolarformingVector::transmit([one, one]).unwrap(),
        ];
        let w = PolarformingVector::receive([one, C64::new(0.0, -1.0)]).unwrap();
        let pat = GainPattern::THREE_GPP;
        let full = stacked_channel(&user, &poses, &layout, &v, &w, &c, &pat).unwrap();
        let single = stacked_channel(&user, &poses[..1], &layout, &v[..1], &w, &c, &pat).unwrap();
        assert_eq!(full.rows(0, 4).into_owned(), single);
        let swapped = stacked_channel(&user, &[poses[1], poses[0]], &layout, &[v[1], v[0]], &w, &c, &pat).unwrap();
        assert_eq!(swapped.rows(0, 4).into_owned(), full.rows(4, 4).into_owned());
        let parts = full.rows(0, 4).norm_squared() + full.rows(4, 4).norm_squared();
        assert!((full.norm_squared() - parts).abs() <= 1e-14 * parts);
        assert!(stacked_channel(&user, &poses, &layout, &v[..1], &w, &c, &pat).is_err());
    }
}
