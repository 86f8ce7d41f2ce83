//! Recursive-sampling particle swarm.

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fitness, penalty_violations, poses_to_vector, random_rotation, sample_channels, vector_to_poses, ChannelSample,
    PoseObjective, PoseSpace, Violations,
};
use crate::channel::UserState;
use crate::error::{Error, Result};
use crate::geometry::{RotationAngles, SubarrayPose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    /// Swarm size `S`.
    pub swarm: usize,
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    /// Iteration count `I_iter`.
    pub iterations: usize,
    /// Penalty per violated placement constraint.
    pub tau: f64,
    /// `kappa_i = i^(-kappa_exponent)`.
    pub kappa_exponent: f64,
    /// Channel samples `L_bar` drawn once per search.
    pub total_samples: usize,
    /// Mini-batch size `L_S`; batches are used cyclically.
    pub batch: usize,
    /// Uniform draws tried per particle before falling back to a radial
    /// placement.
    pub init_attempts: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm: 20,
            omega: 0.7,
            c1: 1.5,
            c2: 1.5,
            iterations: 30,
            tau: 10.0,
            kappa_exponent: 0.2,
            total_samples: 60,
            batch: 2,
            init_attempts: 100,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm == 0 || self.batch == 0 || self.total_samples < self.batch {
            return Err(Error::InvalidInput(format!(
                "need swarm >= 1 and 1 <= batch <= total_samples: {self:?}"
            )));
        }
        if self.total_samples % self.batch != 0 {
            return Err(Error::InvalidInput(format!(
                "total_samples {} is not a multiple of batch {}",
                self.total_samples, self.batch
            )));
        }
        let coeffs = [self.omega, self.c1, self.c2, self.tau, self.kappa_exponent];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(format!(
                "PSO coefficients must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// `kappa_i` for the 1-based iteration `i`.
    pub fn kappa(&self, i: usize) -> f64 {
        (i as f64).powf(-self.kappa_exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub s: DVector<f64>,
    pub velocity: DVector<f64>,
    /// Surrogate `J` at the last evaluation.
    pub j: f64,
    pub best_s: DVector<f64>,
    /// Penalized fitness recorded when `best_s` was set.
    pub best_fitness: f64,
}

impl Particle {
    pub fn at(s: DVector<f64>) -> Self {
        let n = s.len();
        Self {
            best_s: s.clone(),
            s,
            velocity: DVector::zeros(n),
            j: 0.0,
            best_fitness: f64::NEG_INFINITY,
        }
    }
}

/// Positions uniform in the cube and rotations uniform, redrawn until the
/// pose is feasible. After `attempts` failures the subarrays are placed on
/// the inscribed sphere facing radially outwards, which only the distance
/// constraint can reject.
pub fn initial_particle(space: &PoseSpace, attempts: usize, rng: &mut impl Rng) -> DVector<f64> {
    let h = space.side / 2.0;
    let b = space.subarrays;
    let mut last = None;
    for _ in 0..attempts {
        let poses: Vec<SubarrayPose> = (0..b)
            .map(|_| {
                let q = Vector3::new(
                    rng.random_range(-h..=h),
                    rng.random_range(-h..=h),
                    rng.random_range(-h..=h),
                );
                SubarrayPose::new(q, random_rotation(rng))
            })
            .collect();
        let ok = penalty_violations(&poses, space.d_min).is_feasible();
        last = Some(poses);
        if ok {
            return poses_to_vector(last.as_ref().unwrap());
        }
    }
    for _ in 0..attempts.max(1) {
        let poses: Vec<SubarrayPose> = (0..b)
            .map(|_| {
                let n = random_unit(rng);
                SubarrayPose::new(
                    n * h,
                    RotationAngles::facing(&n, rng.random_range(0.0..std::f64::consts::TAU)),
                )
            })
            .collect();
        let ok = penalty_violations(&poses, space.d_min).is_feasible();
        last = Some(poses);
        if ok {
            break;
        }
    }
    poses_to_vector(&last.expect("at least one attempt"))
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * az.cos(), r * az.sin(), z)
}

/// `to - from` reduced into `[-pi, pi)`.
fn angle_diff(to: f64, from: f64) -> f64 {
    use std::f64::consts::PI;
    (to - from + PI).rem_euclid(std::f64::consts::TAU) - PI
}

/// Velocity and position update, followed by the projection onto the cube.
/// The random factors are drawn per component.
pub fn pso_step(
    particles: &mut [Particle],
    global_best: &DVector<f64>,
    cfg: &PsoConfig,
    space: &PoseSpace,
    rng: &mut impl Rng,
) {
    let b3 = 3 * space.subarrays;
    // rotation offsets are taken the short way round the circle
    let diff = |j: usize, to: f64, from: f64| if j < b3 { to - from } else { angle_diff(to, from) };
    for p in particles {
        for j in 0..p.s.len() {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            p.velocity[j] = cfg.omega * p.velocity[j]
                + cfg.c1 * r1 * diff(j, p.best_s[j], p.s[j])
                + cfg.c2 * r2 * diff(j, global_best[j], p.s[j]);
        }
        p.s += &p.velocity;
        space.project(&mut p.s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoOutput {
    pub best: Vec<SubarrayPose>,
    pub best_vector: DVector<f64>,
    /// Recorded penalized fitness of `best`; `-inf` if nothing was
    /// evaluated.
    pub best_fitness: f64,
    pub violations: Violations,
    /// Global-best penalized fitness after every iteration.
    pub trace: Vec<f64>,
    pub failed_samples: usize,
}

/// Runs the swarm on channel samples drawn around the given user
/// locations and returns the best pose found.
///
/// Personal and global bests keep the fitness recorded when they were set,
/// even though later values come from other mini-batches.
pub fn rs_pso_solve(
    space: &PoseSpace,
    cfg: &PsoConfig,
    users: &[UserState],
    objective: &dyn PoseObjective,
    rng: &mut impl Rng,
) -> Result<PsoOutput> {
    space.validate()?;
    cfg.validate()?;
    let samples = sample_channels(users, cfg.total_samples, rng);
    let batches: Vec<&[ChannelSample]> = samples.chunks(cfg.batch).collect();
    let mut particles: Vec<Particle> = (0..cfg.swarm)
        .map(|_| Particle::at(initial_particle(space, cfg.init_attempts, rng)))
        .collect();

    let mut global = particles[0].s.clone();
    let mut global_fitness = f64::NEG_INFINITY;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut failed_samples = 0;
    // per-iteration velocity draws come from their own stream so that the
    // parallel fitness pass cannot perturb them
    let mut step_rng = ChaCha8Rng::from_rng(rng);
    for i in 1..=cfg.iterations {
        let batch = batches[(i - 1) % batches.len()];
        let kappa = cfg.kappa(i);
        let evals: Vec<Result<super::Fitness>> = particles
            .par_iter()
            .map(|p| fitness(&p.s, space, batch, p.j, kappa, cfg.tau, objective))
            .collect();
        for (p, f) in particles.iter_mut().zip(evals) {
            let f = f?;
            failed_samples += f.failed_samples;
            p.j = f.j;
            if f.penalized > p.best_fitness {
                p.best_fitness = f.penalized;
                p.best_s = p.s.clone();
            }
        }
        for p in &particles {
            if p.best_fitness > global_fitness {
                global_fitness = p.best_fitness;
                global = p.best_s.clone();
            }
        }
        trace.push(global_fitness);
        pso_step(&mut particles, &global, cfg, space, &mut step_rng);
    }

    let best = vector_to_poses(&global);
    let violations = penalty_violations(&best, space.d_min);
    Ok(PsoOutput {
        best,
        best_vector: global,
        best_fitness: global_fitness,
        violations,
        trace,
        failed_samples,
    })
}
