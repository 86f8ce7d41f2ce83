//! Two-timescale protocol runs and Monte-Carlo sweeps.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Config, LocationSource};
use super::scenario::{generate_scenario, sensed_user, sensing_noise_power, Scenario, ScenarioSummary};
use super::schemes::{
    mrt_rates, sector_layout, sector_poses, FixedPolarforming, LinkModel, MrtObjective, PddObjective, Scheme, SECTORS,
};
use crate::channel::UserState;
use crate::error::Result;
use crate::fast_opt::pdd_solve;
use crate::geometry::{SubarrayLayout, SubarrayPose};
use crate::localization::{localize_users, position_errors, training_poses, PilotPattern};
use crate::slow_opt::{random_rotation, rs_pso_solve, PoseObjective};

/// Independent random streams of one trial. Each is seeded from the
/// trial's master stream in a fixed order, so adding a scheme or changing
/// one stage never shifts the draws of another.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    pub scenario: ChaCha8Rng,
    pub sensing: ChaCha8Rng,
    pub polarforming: ChaCha8Rng,
    pub search: ChaCha8Rng,
    pub intervals: ChaCha8Rng,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        master.set_stream(trial);
        let mut next = || ChaCha8Rng::seed_from_u64(master.random());
        Self {
            scenario: next(),
            sensing: next(),
            polarforming: next(),
            search: next(),
            intervals: next(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingResult {
    pub estimates: Vec<Vector3<f64>>,
    pub errors: Vec<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub design_s: f64,
    pub evaluate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: Scheme,
    pub poses: Vec<SubarrayPose>,
    /// Global-best fitness per iteration of the pose search, if any.
    pub search_trace: Vec<f64>,
    pub pose_violations: usize,
    /// `rates[t][k]` in bits/s/Hz.
    pub rates: Vec<Vec<f64>>,
    pub weighted_rates: Vec<f64>,
    pub sum_rates: Vec<f64>,
    /// Means over coherence intervals; absent when none were run.
    pub mean_weighted_rate: Option<f64>,
    pub mean_sum_rate: Option<f64>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub trial: u64,
    pub scenario: ScenarioSummary,
    pub sensing: Option<SensingResult>,
    pub schemes: Vec<RunResult>,
}

/// Pilot phase: localizes every user from the training poses.
pub fn sense_users(scenario: &Scenario, cfg: &Config, rng: &mut impl Rng) -> Result<SensingResult> {
    let s = &cfg.sensing;
    let pattern = PilotPattern::new(
        scenario.users.len(),
        s.slots,
        s.blocks,
        training_poses(s.poses, scenario.config.cube_side),
    )?;
    let sigma2 = sensing_noise_power(&scenario.consts, &scenario.users, s.snr_db);
    let out = localize_users(
        &scenario.users,
        &pattern,
        &scenario.layout,
        &scenario.consts,
        &scenario.config.gain,
        sigma2,
        &s.localization,
        rng,
    )?;
    Ok(SensingResult {
        estimates: out.users.iter().map(|u| u.position).collect(),
        errors: position_errors(&scenario.users, &out.users)?,
        sigma2,
    })
}

/// Runs both timescales for the given schemes on one scenario.
///
/// Phase I senses the users (unless genie locations are configured) and
/// designs each scheme's subarray poses; phase II draws fresh user
/// rotations per coherence interval, shared by all schemes, and records
/// the achieved rates.
pub fn run_two_timescale(
    scenario: &Scenario,
    cfg: &Config,
    schemes: &[Scheme],
    streams: &mut TrialStreams,
) -> Result<(Option<SensingResult>, Vec<RunResult>)> {
    let needs_locations = schemes.iter().any(Scheme::moves_antennas);
    let sensing = match cfg.sensing.locations {
        LocationSource::Sensed if needs_locations => {
            Some(sense_users(scenario, cfg, &mut streams.sensing).map_err(|e| e.in_stage("sensing"))?)
        }
        _ => None,
    };
    let located: Vec<UserState> = match &sensing {
        Some(s) => s
            .estimates
            .iter()
            .map(|p| sensed_user(&scenario.config, p))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("sensing"))?,
        None => scenario.users.clone(),
    };

    let k = scenario.users.len();
    let b = scenario.config.subarrays;
    let sector_layout = sector_layout(scenario)?;
    let w_fixed = FixedPolarforming::random(&scenario.codebook, k, 0, &mut streams.polarforming);
    let fixed_sector = FixedPolarforming {
        w: w_fixed.w.clone(),
        v: FixedPolarforming::random(&scenario.codebook, 0, SECTORS, &mut streams.polarforming).v,
    };
    let fixed_pa = FixedPolarforming {
        w: w_fixed.w,
        v: FixedPolarforming::random(&scenario.codebook, 0, b, &mut streams.polarforming).v,
    };

    let intervals: Vec<Vec<UserState>> = (0..scenario.config.coherence_intervals)
        .map(|_| {
            scenario
                .users
                .iter()
                .map(|u| u.with_rotation(random_rotation(&mut streams.intervals)))
                .collect()
        })
        .collect();

    let search_seed: u64 = streams.search.random();
    let mut results = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let start = Instant::now();
        let (layout, fixed): (&SubarrayLayout, &FixedPolarforming) = if scheme.moves_antennas() {
            (&scenario.layout, &fixed_pa)
        } else {
            (&sector_layout, &fixed_sector)
        };
        let link = LinkModel {
            layout,
            consts: &scenario.consts,
            gain: &scenario.config.gain,
            weights: &scenario.weights,
        };
        let (poses, search_trace, pose_violations) = if scheme.moves_antennas() {
            let objective: Box<dyn PoseObjective> = match scheme {
                Scheme::TtPpr => Box::new(PddObjective {
                    link,
                    codebook: &scenario.codebook,
                    cfg: cfg.pdd_search,
                }),
                _ => Box::new(MrtObjective {
                    link,
                    polarforming: fixed,
                }),
            };
            // every searching scheme sees the same samples and swarm start
            let mut rng = ChaCha8Rng::seed_from_u64(search_seed);
            let out = rs_pso_solve(&scenario.space, &cfg.pso, &located, objective.as_ref(), &mut rng)
                .map_err(|e| e.in_stage("pose search"))?;
            let v = out.violations.count();
            (out.best, out.trace, v)
        } else {
            (sector_poses(scenario.config.cube_side), Vec::new(), 0)
        };
        let design_s = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut rates = Vec::with_capacity(intervals.len());
        for users in &intervals {
            let inst = link.instance(users, &poses).map_err(|e| e.in_stage("fast solve"))?;
            let r = if scheme.optimizes_polarforming() {
                pdd_solve(&inst, &scenario.codebook, &cfg.pdd)
                    .map_err(|e| e.in_stage("fast solve"))?
                    .diagnostics
                    .rates
            } else {
                mrt_rates(&inst, &fixed.w, &fixed.v)
            };
            rates.push(r);
        }
        let weighted_rates: Vec<f64> = rates
            .iter()
            .map(|r| r.iter().zip(&scenario.weights).map(|(r, w)| r * w).sum())
            .collect();
        let sum_rates: Vec<f64> = rates.iter().map(|r| r.iter().sum()).collect();
        let mean = |x: &[f64]| (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64);
        results.push(RunResult {
            scheme,
            poses,
            search_trace,
            pose_violations,
            mean_weighted_rate: mean(&weighted_rates),
            mean_sum_rate: mean(&sum_rates),
            rates,
            weighted_rates,
            sum_rates,
            timing: Timing {
                design_s,
                evaluate_s: start.elapsed().as_secs_f64(),
            },
        });
    }
    Ok((sensing, results))
}

/// One full trial: scenario draw plus [`run_two_timescale`].
pub fn run_trial(cfg: &Config, schemes: &[Scheme], seed: u64, trial: u64) -> Result<TrialResult> {
    let mut streams = TrialStreams::new(seed, trial);
    let scenario = generate_scenario(&cfg.scenario, &mut streams.scenario).map_err(|e| e.in_stage("scenario"))?;
    let (sensing, schemes) = run_two_timescale(&scenario, cfg, schemes, &mut streams)?;
    Ok(TrialResult {
        seed,
        trial,
        scenario: scenario.summary(),
        sensing,
        schemes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub trial: u64,
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub weighted_rate: f64,
    pub sum_rate: f64,
}

/// Rate sweep over `cfg.sweep`; trials share their seeds across sweep
/// points. Rows come back sorted by point, trial and scheme.
pub fn run_sweep(cfg: &Config, seed: u64) -> Result<Vec<SweepRow>> {
    let axis = cfg.sweep.axis;
    let points: Vec<(usize, f64, Config)> = cfg
        .sweep
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| Ok((i, v, axis.apply(cfg, v).map_err(|e| e.in_stage("config"))?)))
        .collect::<Result<_>>()?;
    if points.iter().any(|p| p.2.scenario.coherence_intervals == 0) {
        return Err(crate::Error::Config("rate sweeps need coherence_intervals >= 1".into()).in_stage("config"));
    }
    let jobs: Vec<(usize, f64, &Config, u64)> = points
        .iter()
        .flat_map(|(i, v, c)| (0..cfg.run.trials as u64).map(move |t| (*i, *v, c, t)))
        .collect();
    let mut rows: Vec<(usize, SweepRow)> = jobs
        .par_iter()
        .map(|&(i, v, c, t)| {
            let res = run_trial(c, &cfg.run.schemes, seed, t)?;
            Ok(res
                .schemes
                .into_iter()
                .map(|r| {
                    (
                        i,
                        SweepRow {
                            seed,
                            trial: t,
                            sweep_axis: axis.name().to_string(),
                            sweep_value: v,
                            scheme: r.scheme,
                            weighted_rate: r.mean_weighted_rate.unwrap_or(0.0),
                            sum_rate: r.mean_sum_rate.unwrap_or(0.0),
                        },
                    )
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| (a.0, a.1.trial, a.1.scheme).cmp(&(b.0, b.1.trial, b.1.scheme)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeRow {
    pub seed: u64,
    pub snr_db: f64,
    pub user_id: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub true_z: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub error_m: f64,
}

/// Localization error over `cfg.localize.snr_db`; each trial keeps its
/// user population across SNR points. Rows are sorted by SNR point,
/// trial and user.
pub fn run_localization(cfg: &Config, seed: u64) -> Result<Vec<LocalizeRow>> {
    let jobs: Vec<(usize, f64, u64)> = cfg
        .localize
        .snr_db
        .iter()
        .enumerate()
        .flat_map(|(i, &snr)| (0..cfg.localize.trials as u64).map(move |t| (i, snr, t)))
        .collect();
    let mut rows: Vec<(usize, u64, LocalizeRow)> = jobs
        .par_iter()
        .map(|&(i, snr, t)| {
            let mut streams = TrialStreams::new(seed, t);
            let scenario =
                generate_scenario(&cfg.scenario, &mut streams.scenario).map_err(|e| e.in_stage("scenario"))?;
            let mut c = cfg.clone();
            c.sensing.snr_db = snr;
            let s = sense_users(&scenario, &c, &mut streams.sensing).map_err(|e| e.in_stage("sensing"))?;
            Ok(scenario
                .users
                .iter()
                .zip(&s.estimates)
                .zip(&s.errors)
                .enumerate()
                .map(|(k, ((u, e), err))| {
                    let p = u.position();
                    (
                        i,
                        t,
                        LocalizeRow {
                            seed,
                            snr_db: snr,
                            user_id: k,
                            true_x: p.x,
                            true_y: p.y,
                            true_z: p.z,
                            est_x: e.x,
                            est_y: e.y,
                            est_z: e.z,
                            error_m: *err,
                        },
                    )
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| (a.0, a.1, a.2.user_id).cmp(&(b.0, b.1, b.2.user_id)));
    Ok(rows.into_iter().map(|r| r.2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slow_opt::PsoConfig;

    pub(crate) fn desk_config() -> Config {
        let mut cfg = Config::default();
        cfg.scenario.subarrays = 4;
        cfg.scenario.antennas_per_subarray = 2;
        cfg.scenario.users = 2;
        cfg.scenario.coherence_intervals = 2;
        cfg.sensing.slots = 4;
        cfg.sensing.blocks = 4;
        cfg.sensing.poses = 4;
        cfg.pso = PsoConfig {
            swarm: 4,
            iterations: 3,
            total_samples: 4,
            batch: 2,
            ..PsoConfig::default()
        };
        cfg.run.trials = 2;
        cfg.sweep.values = vec![0.0, 10.0];
        cfg.localize.snr_db = vec![0.0, 20.0];
        cfg.localize.trials = 2;
        cfg
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        let a = TrialStreams::new(1, 0);
        let b = TrialStreams::new(1, 0);
        assert_eq!(a.scenario.get_seed(), b.scenario.get_seed());
        assert_ne!(a.scenario.get_seed(), a.sensing.get_seed());
        assert_ne!(TrialStreams::new(1, 1).scenario.get_seed(), a.scenario.get_seed());
        assert_ne!(TrialStreams::new(2, 0).scenario.get_seed(), a.scenario.get_seed());
    }

    #[test]
    fn trial_runs_every_scheme() {
        let cfg = desk_config();
        let res = run_trial(&cfg, &Scheme::ALL, 7, 0).unwrap();
        assert_eq!(res.schemes.len(), 4);
        assert!(res.sensing.is_some());
        for r in &res.schemes {
            assert_eq!(r.rates.len(), 2);
            assert!(r.rates.iter().flatten().all(|x| *x >= 0.0));
            assert!(r.mean_weighted_rate.unwrap() >= 0.0);
            assert_eq!(r.poses.len(), if r.scheme.moves_antennas() { 4 } else { 3 });
            assert_eq!(r.search_trace.len(), if r.scheme.moves_antennas() { 3 } else { 0 });
        }
        let strip = |mut t: TrialResult| {
            for r in &mut t.schemes {
                r.timing = Timing {
                    design_s: 0.0,
                    evaluate_s: 0.0,
                };
            }
            t
        };
        assert_eq!(strip(res.clone()), strip(run_trial(&cfg, &Scheme::ALL, 7, 0).unwrap()));
    }

    #[test]
    fn no_coherence_intervals_leaves_phase_one_only() {
        let mut cfg = desk_config();
        cfg.scenario.coherence_intervals = 0;
        let res = run_trial(&cfg, &[Scheme::TtPpr], 3, 0).unwrap();
        let r = &res.schemes[0];
        assert!(r.rates.is_empty());
        assert_eq!(r.mean_weighted_rate, None);
        assert_eq!(r.search_trace.len(), 3);
        assert!(res.sensing.is_some());
        assert!(run_sweep(&cfg, 3).is_err());
    }

    #[test]
    fn genie_locations_skip_sensing() {
        let mut cfg = desk_config();
        cfg.sensing.locations = LocationSource::Genie;
        let res = run_trial(&cfg, &[Scheme::PositionOnly], 3, 0).unwrap();
        assert!(res.sensing.is_none());
        let res = run_trial(&desk_config(), &[Scheme::Fixed], 3, 0).unwrap();
        assert!(res.sensing.is_none());
    }

    #[test]
    fn schemes_see_identical_scenarios() {
        let cfg = desk_config();
        let all = run_trial(&cfg, &Scheme::ALL, 9, 1).unwrap();
        let one = run_trial(&cfg, &[Scheme::PolarformingOnly], 9, 1).unwrap();
        assert_eq!(all.scenario, one.scenario);
        assert_eq!(all.schemes[1].rates, one.schemes[0].rates);
    }

    #[test]
    fn sweep_rows_are_sorted_and_complete() {
        let mut cfg = desk_config();
        cfg.run.schemes = vec![Scheme::PolarformingOnly, Scheme::Fixed];
        let rows = run_sweep(&cfg, 11).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert_eq!(rows[0].sweep_value, 0.0);
        assert_eq!(rows[0].scheme, Scheme::Fixed);
        assert_eq!(rows[1].scheme, Scheme::PolarformingOnly);
        assert_eq!(rows[2].trial, 1);
        assert_eq!(rows[4].sweep_value, 10.0);
        assert!(rows.iter().all(|r| r.sweep_axis == "zeta_db"));
        // more power never hurts the optimized scheme on the same draws
        for t in 0..2 {
            let at = |v: f64| {
                rows.iter()
                    .find(|r| r.trial == t && r.sweep_value == v && r.scheme == Scheme::PolarformingOnly)
                    .unwrap()
                    .sum_rate
            };
            assert!(at(10.0) > at(0.0));
        }
    }

    #[test]
    fn localization_rows_pair_users_across_snr() {
        let cfg = desk_config();
        let rows = run_localization(&cfg, 5).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let (lo, hi): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.snr_db == 0.0);
        for (a, b) in lo.iter().zip(&hi) {
            assert_eq!(a.true_x, b.true_x);
            assert_eq!(a.user_id, b.user_id);
        }
    }
}
