//! Slow-timescale search over subarray positions and rotations.
//!
//! A pose is the `6B`-vector `s = [q_1..q_B, u_1..u_B]`. Its quality is the
//! expected weighted sum rate over random user rotations, estimated with a
//! recursively averaged mini-batch surrogate and searched by a particle
//! swarm. Infeasible placements are penalized rather than rejected.

pub mod pso;

use nalgebra::{DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::UserState;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, RotationAngles, SubarrayPose};

pub use pso::{initial_particle, pso_step, rs_pso_solve, Particle, PsoConfig, PsoOutput};

/// Feasible region of the pose search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpace {
    pub subarrays: usize,
    /// Side of the cube centred at the BS origin that holds every subarray
    /// centre.
    pub side: f64,
    /// Minimum centre-to-centre distance.
    pub d_min: f64,
}

impl PoseSpace {
    pub fn validate(&self) -> Result<()> {
        if self.subarrays == 0 || !(self.side > 0.0) || !(self.d_min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pose space needs B >= 1, A > 0 and d_min > 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        6 * self.subarrays
    }

    /// Clamps positions into the cube and wraps rotations into `[0, 2pi)`.
    pub fn project(&self, s: &mut DVector<f64>) {
        let h = self.side / 2.0;
        let b3 = 3 * self.subarrays;
        for (j, x) in s.iter_mut().enumerate() {
            *x = if j < b3 { x.clamp(-h, h) } else { wrap_angle(*x) };
        }
    }
}

pub fn poses_to_vector(poses: &[SubarrayPose]) -> DVector<f64> {
    let b = poses.len();
    let mut s = DVector::zeros(6 * b);
    for (i, p) in poses.iter().enumerate() {
        s.fixed_rows_mut::<3>(3 * i).copy_from(&p.q);
        s.fixed_rows_mut::<3>(3 * b + 3 * i)
            .copy_from(&Vector3::from(p.u.as_array()));
    }
    s
}

pub fn vector_to_poses(s: &DVector<f64>) -> Vec<SubarrayPose> {
    let b = s.len() / 6;
    (0..b)
        .map(|i| {
            let q = s.fixed_rows::<3>(3 * i).into_owned();
            let u = s.fixed_rows::<3>(3 * b + 3 * i);
            SubarrayPose::new(q, RotationAngles::new(u[0], u[1], u[2]))
        })
        .collect()
}

/// One random draw of the user population: sensed locations with fresh
/// device rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub users: Vec<UserState>,
}

/// Draws `count` samples, each giving every user an independent rotation
/// uniform on `[0, 2pi)^3`. Locations are copied from `users`.
pub fn sample_channels(users: &[UserState], count: usize, rng: &mut impl Rng) -> Vec<ChannelSample> {
    (0..count)
        .map(|_| ChannelSample {
            users: users.iter().map(|u| u.with_rotation(random_rotation(rng))).collect(),
        })
        .collect()
}

pub(crate) fn random_rotation(rng: &mut impl Rng) -> RotationAngles {
    use std::f64::consts::TAU;
    RotationAngles::new(
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
        rng.random_range(0.0..TAU),
    )
}

/// Placement constraint violations of a pose.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// Unordered pairs `(n, b)`, `n < b`, closer than `d_min`.
    pub too_close: Vec<(usize, usize)>,
    /// Ordered pairs where subarray `b` lies in front of subarray `n`.
    pub blocking: Vec<(usize, usize)>,
    /// Subarrays whose boresight points back towards the BS centre.
    pub inward: Vec<usize>,
}

impl Violations {
    pub fn count(&self) -> usize {
        self.too_close.len() + self.blocking.len() + self.inward.len()
    }

    pub fn is_feasible(&self) -> bool {
        self.count() == 0
    }
}

pub fn penalty_violations(poses: &[SubarrayPose], d_min: f64) -> Violations {
    let normals: Vec<Vector3<f64>> = poses.iter().map(|p| p.normal()).collect();
    let mut v = Violations::default();
    for (n, pn) in poses.iter().enumerate() {
        for (b, pb) in poses.iter().enumerate() {
            if b == n {
                continue;
            }
            if n < b && (pn.q - pb.q).norm() < d_min {
                v.too_close.push((n, b));
            }
            if normals[n].dot(&(pb.q - pn.q)) > 0.0 {
                v.blocking.push((n, b));
            }
        }
        if normals[n].dot(&pn.q) < 0.0 {
            v.inward.push(n);
        }
    }
    v
}

/// Weighted sum rate achieved at a pose for one channel sample.
pub trait PoseObjective: Sync {
    fn sample_rate(&self, poses: &[SubarrayPose], sample: &ChannelSample) -> Result<f64>;
}

impl<F> PoseObjective for F
where
    F: Fn(&[SubarrayPose], &ChannelSample) -> Result<f64> + Sync,
{
    fn sample_rate(&self, poses: &[SubarrayPose], sample: &ChannelSample) -> Result<f64> {
        self(poses, sample)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    /// Recursive surrogate `J`.
    pub j: f64,
    /// `J - tau |Q|`.
    pub penalized: f64,
    pub violations: usize,
    /// Samples whose inner solve failed; they are left out of the batch
    /// mean.
    pub failed_samples: usize,
}

/// Surrogate update `J = (1 - kappa) J_prev + kappa * mean(batch rates)`
/// and its penalized value.
pub fn fitness(
    s: &DVector<f64>,
    space: &PoseSpace,
    batch: &[ChannelSample],
    prev_j: f64,
    kappa: f64,
    tau: f64,
    objective: &dyn PoseObjective,
) -> Result<Fitness> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("mini-batch must hold at least one sample".into()));
    }
    let poses = vector_to_poses(s);
    let mut sum = 0.0;
    let mut ok = 0usize;
    for sample in batch {
        match objective.sample_rate(&poses, sample) {
            Ok(r) if r.is_finite() => {
                sum += r;
                ok += 1;
            }
            Ok(_) | Err(_) => {}
        }
    }
    let batch_mean = if ok > 0 { sum / ok as f64 } else { 0.0 };
    let j = (1.0 - kappa) * prev_j + kappa * batch_mean;
    let violations = penalty_violations(&poses, space.d_min).count();
    Ok(Fitness {
        j,
        penalized: j - tau * violations as f64,
        violations,
        failed_samples: batch.len() - ok,
    })
}
