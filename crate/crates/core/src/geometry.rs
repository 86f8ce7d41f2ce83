//! Coordinate frames, subarray placement and direction math.
//!
//! Every subarray (and every user device) carries a local Cartesian frame
//! obtained from the global one by the rotation `R(u)` with
//! `u = [alpha, beta, gamma]` the rotation angles about the global x, y and
//! z axes. Local vectors map to global ones through `R(u) * x_local`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce an angle into `[0, 2pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Rotation angles about the global x, y and z axes, stored in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct RotationAngles {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl RotationAngles {
    pub const ZERO: Self = Self {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    /// Wraps each angle into `[0, 2pi)`.
    ///
    /// # Panics
    ///
    /// Panics if any angle is not finite; use [`RotationAngles::try_new`]
    /// for untrusted input.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::try_new(alpha, beta, gamma).expect("rotation angles must be finite")
    }

    pub fn try_new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite rotation angles ({alpha}, {beta}, {gamma})"
            )));
        }
        Ok(Self {
            alpha: wrap_angle(alpha),
            beta: wrap_angle(beta),
            gamma: wrap_angle(gamma),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// Rotation whose local +z axis (boresight) points along `normal`,
    /// with `gamma` left free. `normal` need not be unit length.
    pub fn facing(normal: &Vector3<f64>, gamma: f64) -> Self {
        let n = normal.normalize();
        // R(u) e_z = [-sin b, cos b sin a, cos a cos b]^T; the remaining
        // freedom is the roll gamma, which does not move e_z.
        let beta = (-n.x).clamp(-1.0, 1.0).asin();
        let alpha = n.y.atan2(n.z);
        Self::new(alpha, beta, gamma)
    }

    /// Angles of a proper rotation matrix, inverting [`rotation_matrix`].
    ///
    /// At gimbal lock (`|cos beta| = 0`) the split between alpha and gamma
    /// is not unique; gamma is then set to 0.
    pub fn from_matrix(r: &Matrix3<f64>) -> Self {
        let beta = (-r[(0, 2)]).clamp(-1.0, 1.0).asin();
        if beta.cos() < 1e-12 {
            // with gamma = 0 the middle column is [0, cos a, -sin a]
            let alpha = (-r[(2, 1)]).atan2(r[(1, 1)]);
            return Self::new(alpha, beta, 0.0);
        }
        let alpha = r[(1, 2)].atan2(r[(2, 2)]);
        let gamma = r[(0, 1)].atan2(r[(0, 0)]);
        Self::new(alpha, beta, gamma)
    }
}

impl TryFrom<[f64; 3]> for RotationAngles {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::try_new(v[0], v[1], v[2])
    }
}

impl From<RotationAngles> for [f64; 3] {
    fn from(u: RotationAngles) -> Self {
        u.as_array()
    }
}

/// Position (global frame, meters) and rotation of one BS subarray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubarrayPose {
    pub q: Vector3<f64>,
    pub u: RotationAngles,
}

impl SubarrayPose {
    pub fn new(q: Vector3<f64>, u: RotationAngles) -> Self {
        Self { q, u }
    }

    /// True when the centre lies inside the cube of side `side` centred at
    /// the origin.
    pub fn inside_cube(&self, side: f64) -> bool {
        let h = side / 2.0 + 1e-12;
        self.q.iter().all(|c| c.abs() <= h)
    }

    pub fn normal(&self) -> Vector3<f64> {
        subarray_normal(&self.u)
    }
}

/// Antenna offsets of one subarray in its local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubarrayLayout {
    offsets: Vec<Vector3<f64>>,
}

impl SubarrayLayout {
    pub fn new(offsets: Vec<Vector3<f64>>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidInput("subarray layout needs at least one antenna".into()));
        }
        Ok(Self { offsets })
    }

    /// Uniform planar array in the local x'-y' plane, centred on the
    /// subarray origin. `n` antennas are arranged as `rows x cols` with
    /// `rows` the largest divisor of `n` not exceeding `sqrt(n)`.
    pub fn upa(n: usize, spacing: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("UPA needs n >= 1".into()));
        }
        let rows = (1..=n)
            .take_while(|r| r * r <= n)
            .filter(|r| n % r == 0)
            .last()
            .unwrap_or(1);
        let cols = n / rows;
        let cx = (cols as f64 - 1.0) / 2.0;
        let cy = (rows as f64 - 1.0) / 2.0;
        let offsets = (0..rows)
            .flat_map(|r| {
                (0..cols).map(move |c| Vector3::new((c as f64 - cx) * spacing, (r as f64 - cy) * spacing, 0.0))
            })
            .collect();
        Self::new(offsets)
    }

    /// Half-wavelength UPA.
    pub fn half_wavelength_upa(n: usize, lambda: f64) -> Result<Self> {
        Self::upa(n, lambda / 2.0)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }
}

/// Rotation matrix mapping local coordinates to global ones.
pub fn rotation_matrix(u: &RotationAngles) -> Matrix3<f64> {
    let (sa, ca) = u.alpha.sin_cos();
    let (sb, cb) = u.beta.sin_cos();
    let (sg, cg) = u.gamma.sin_cos();
    Matrix3::new(
        cb * cg,
        cb * sg,
        -sb,
        sb * sa * cg - ca * sg,
        sb * sa * sg + ca * cg,
        cb * sa,
        ca * sb * cg + sa * sg,
        ca * sb * sg - sa * cg,
        ca * cb,
    )
}

/// Global positions `q + R(u) r_n` of every antenna of a subarray.
pub fn antenna_positions(pose: &SubarrayPose, layout: &SubarrayLayout) -> Vec<Vector3<f64>> {
    let r = rotation_matrix(&pose.u);
    layout.offsets.iter().map(|o| pose.q + r * o).collect()
}

/// Unit pointing vector for elevation `theta` and azimuth `phi`.
pub fn pointing_vector(theta: f64, phi: f64) -> Result<Vector3<f64>> {
    const EPS: f64 = 1e-12;
    if !(theta.is_finite() && phi.is_finite()) || theta.abs() > PI / 2.0 + EPS || phi.abs() > PI + EPS {
        return Err(Error::InvalidInput(format!(
            "direction (theta={theta}, phi={phi}) outside [-pi/2,pi/2] x [-pi,pi]"
        )));
    }
    Ok(pointing_vector_unchecked(theta, phi))
}

pub(crate) fn pointing_vector_unchecked(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(ct * cp, ct * sp, st)
}

/// Elevation/azimuth `(theta, phi)` of a (not necessarily unit) vector.
/// At the poles the azimuth is reported as 0.
pub fn spherical_angles(f: &Vector3<f64>) -> (f64, f64) {
    let n = f.norm();
    let z = (f.z / n).clamp(-1.0, 1.0);
    let theta = z.asin();
    let rho = (f.x * f.x + f.y * f.y).sqrt() / n;
    let phi = if rho < 1e-14 { 0.0 } else { f.y.atan2(f.x) };
    (theta, phi)
}

/// Local-frame direction of a global unit vector: `R(u)^-1 f` in spherical
/// angles.
pub fn local_direction(u: &RotationAngles, f: &Vector3<f64>) -> (f64, f64) {
    let local = rotation_matrix(u).transpose() * f;
    spherical_angles(&local)
}

/// Boresight normal of a subarray: the rotated local +z axis.
pub fn subarray_normal(u: &RotationAngles) -> Vector3<f64> {
    rotation_matrix(u) * Vector3::z()
}
