//! MUSIC direction finding over the stacked training-pose array.
//!
//! The pose channels `h_mk` of a user at direction `f` are proportional to
//! `sqrt(g_m(f)) a_m(f)`, so the stacked manifold carries the element gain
//! of every pose. When the per-pose estimates share a common phase reference
//! (genie scaling) the full stacked aperture is used coherently; otherwise
//! only the per-pose matched-filter energies are combined.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::parafac::top_eigenvectors;
use crate::channel::GainPattern;
use crate::error::{Error, Result};
use crate::geometry::{antenna_positions, pointing_vector_unchecked, rotation_matrix, SubarrayLayout, SubarrayPose};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MusicSearch {
    /// Per-user seed from the magnitude score on the coarse grid, then a
    /// fine local search of the MUSIC spectrum around it.
    Seeded,
    /// Top-K peaks of the MUSIC spectrum on the coarse grid, associated to
    /// users afterwards.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MusicConfig {
    pub grid_step_deg: f64,
    pub search: MusicSearch,
    /// Weight every pose's steering vector by `sqrt(g_m)`.
    pub gain_weighted: bool,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            grid_step_deg: 1.0,
            search: MusicSearch::Seeded,
            gain_weighted: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DoaEstimate {
    /// One unit vector per user, in user order.
    pub directions: Vec<Vector3<f64>>,
    /// Score at each estimate: the signal-subspace projection `||U_s^H a||^2`
    /// in coherent mode, the normalized magnitude score otherwise.
    pub scores: Vec<f64>,
    /// Distinct spectrum peaks found (direct search only).
    pub peaks_found: Option<usize>,
}

/// Stacked array manifold of the training poses.
pub struct Manifold<'a> {
    rt: Vec<Matrix3<f64>>,
    positions: Vec<Vec<Vector3<f64>>>,
    wavenumber: f64,
    pattern: &'a GainPattern,
    weighted: bool,
}

impl<'a> Manifold<'a> {
    pub fn new(
        poses: &[SubarrayPose],
        layout: &SubarrayLayout,
        lambda: f64,
        pattern: &'a GainPattern,
        weighted: bool,
    ) -> Self {
        Self {
            rt: poses.iter().map(|p| rotation_matrix(&p.u).transpose()).collect(),
            positions: poses.iter().map(|p| antenna_positions(p, layout)).collect(),
            wavenumber: 2.0 * PI / lambda,
            pattern,
            weighted,
        }
    }

    pub fn poses(&self) -> usize {
        self.rt.len()
    }

    pub fn antennas(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Largest distance between any two antennas of the stacked array.
    pub fn aperture(&self) -> f64 {
        let all: Vec<_> = self.positions.iter().flatten().collect();
        let mut d: f64 = 0.0;
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                d = d.max((*a - *b).norm());
            }
        }
        d
    }

    /// Linear element gain of every pose towards `f`, or all ones when
    /// unweighted.
    pub fn gains(&self, f: &Vector3<f64>) -> Vec<f64> {
        self.rt
            .iter()
            .map(|rt| {
                if self.weighted {
                    10f64.powf(self.pattern.gain_dbi_local(&(rt * f)) / 10.0)
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Unit-modulus steering vectors, stacked pose by pose (length MN).
    pub fn steering(&self, f: &Vector3<f64>) -> DVector<C64> {
        let n = self.antennas();
        let mut a = DVector::zeros(self.poses() * n);
        for (m, pos) in self.positions.iter().enumerate() {
            for (i, r) in pos.iter().enumerate() {
                a[m * n + i] = C64::from_polar(1.0, -self.wavenumber * f.dot(r));
            }
        }
        a
    }

    /// Gain-weighted stacked steering vector with unit norm.
    pub fn weighted_steering(&self, f: &Vector3<f64>) -> DVector<C64> {
        let g = self.gains(f);
        let n = self.antennas();
        let mut a = self.steering(f);
        for (m, gm) in g.iter().enumerate() {
            a.rows_mut(m * n, n).scale_mut(gm.sqrt());
        }
        let norm = a.norm();
        a.unscale(norm)
    }

    /// Phase-insensitive match of one user's pose channels to direction `f`:
    /// `sum_m |a_m^H h_m|^2 / (N sum_m ||h_m||^2)`.
    ///
    /// It is at most 1, with equality when every `h_m` is parallel to
    /// `a_m(f)`, whatever the per-pose complex scales are.
    pub fn magnitude_score(&self, f: &Vector3<f64>, h: &[DVector<C64>]) -> f64 {
        let a = self.steering(f);
        bartlett(&a, h, self.antennas())
    }

    /// [`Manifold::magnitude_score`] for several users at once, plus the
    /// total element gain `sum_m g_m` towards `f`.
    fn magnitude_scores(&self, f: &Vector3<f64>, users: &[Vec<DVector<C64>>]) -> (Vec<f64>, f64) {
        let a = self.steering(f);
        let n = self.antennas();
        let scores = users.iter().map(|h| bartlett(&a, h, n)).collect();
        (scores, self.gains(f).iter().sum())
    }
}

fn bartlett(a: &DVector<C64>, h: &[DVector<C64>], n: usize) -> f64 {
    let mut num = 0.0;
    let mut hh = 0.0;
    for (m, hm) in h.iter().enumerate() {
        num += a.rows(m * n, n).dotc(hm).norm_sqr();
        hh += hm.norm_squared();
    }
    if hh == 0.0 {
        0.0
    } else {
        num / (n as f64 * hh)
    }
}

/// Projection `||U_s^H a(f)||^2` of the normalized manifold onto the signal
/// subspace; the MUSIC pseudo-spectrum is `1 / (1 - projection)`.
pub fn subspace_projection(signal: &DMatrix<C64>, manifold: &Manifold, f: &Vector3<f64>) -> f64 {
    (signal.adjoint() * manifold.weighted_steering(f)).norm_squared()
}

/// MUSIC pseudo-spectrum `1 / ||U_n^H a(f)||^2`.
pub fn pseudo_spectrum(signal: &DMatrix<C64>, manifold: &Manifold, f: &Vector3<f64>) -> f64 {
    1.0 / (1.0 - subspace_projection(signal, manifold, f)).max(f64::EPSILON)
}

/// Signal subspace (MN x K) of `R = (1/K) H H^H` for per-pose estimates
/// `h_hat[m]` (K x N).
pub fn signal_subspace(h_hat: &[DMatrix<C64>]) -> DMatrix<C64> {
    let stacked = stack_users(h_hat);
    let k = stacked.ncols();
    let r = &stacked * stacked.adjoint() / C64::from(k as f64);
    top_eigenvectors(r, k)
}

/// MN x K matrix whose column `k` stacks user `k`'s channel over all poses.
fn stack_users(h_hat: &[DMatrix<C64>]) -> DMatrix<C64> {
    let k = h_hat[0].nrows();
    let n = h_hat[0].ncols();
    DMatrix::from_fn(h_hat.len() * n, k, |r, c| h_hat[r / n][(c, r % n)])
}

fn user_channels(h_hat: &[DMatrix<C64>], k: usize) -> Vec<DVector<C64>> {
    h_hat.iter().map(|h| h.row(k).transpose()).collect()
}

fn direction(theta: f64, phi: f64) -> Vector3<f64> {
    pointing_vector_unchecked(theta, phi)
}

fn wrap_phi(phi: f64) -> f64 {
    (phi + PI).rem_euclid(2.0 * PI) - PI
}

/// Pattern search on `(theta, phi)` with a parabolic step per axis; the
/// step halves whenever neither axis improves.
fn refine(start: (f64, f64), step: f64, eval: &dyn Fn(f64, f64) -> f64) -> (f64, f64, f64) {
    let (mut t, mut p) = start;
    let mut best = eval(t, p);
    let mut s = step;
    for _ in 0..200 {
        if s < 1e-9 {
            break;
        }
        let mut improved = false;
        for axis in 0..2 {
            let sa = if axis == 0 { s } else { s / t.cos().abs().max(1e-3) };
            let at = |x: f64| -> (f64, f64) {
                if axis == 0 {
                    (x.clamp(-FRAC_PI_2, FRAC_PI_2), p)
                } else {
                    (t, wrap_phi(x))
                }
            };
            let x0 = if axis == 0 { t } else { p };
            let mut cands = vec![at(x0 - sa), at(x0 + sa)];
            let fm = eval(cands[0].0, cands[0].1);
            let fp = eval(cands[1].0, cands[1].1);
            let mut vals = vec![fm, fp];
            let denom = fm - 2.0 * best + fp;
            if denom < 0.0 {
                let off = (0.5 * (fm - fp) / denom).clamp(-1.0, 1.0);
                let c = at(x0 + off * sa);
                vals.push(eval(c.0, c.1));
                cands.push(c);
            }
            let (i, v) = vals.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
            if v > best {
                best = v;
                (t, p) = cands[i];
                improved = true;
            }
        }
        if !improved {
            s *= 0.5;
        }
    }
    (t, p, best)
}

struct Grid {
    thetas: Vec<f64>,
    phis: Vec<f64>,
}

impl Grid {
    fn new(step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0 && step_deg <= 90.0) {
            return Err(Error::InvalidInput(format!(
                "MUSIC grid step {step_deg} deg not in (0, 90]"
            )));
        }
        let nt = (180.0 / step_deg).round() as usize;
        let np = (360.0 / step_deg).round() as usize;
        Ok(Self {
            thetas: (0..=nt)
                .map(|i| (-90.0 + 180.0 * i as f64 / nt as f64).to_radians())
                .collect(),
            phis: (0..np)
                .map(|j| (-180.0 + 360.0 * j as f64 / np as f64).to_radians())
                .collect(),
        })
    }
}

/// Estimates one direction per user from per-pose channel estimates
/// `h_hat[m]` (K x N, row `k` = user `k`).
///
/// `coherent` states whether the estimates of one user share a phase
/// reference across poses; without it only the magnitude score is usable
/// and `Direct` search is rejected.
pub fn music_doa(
    h_hat: &[DMatrix<C64>],
    poses: &[SubarrayPose],
    layout: &SubarrayLayout,
    lambda: f64,
    pattern: &GainPattern,
    cfg: &MusicConfig,
    coherent: bool,
) -> Result<DoaEstimate> {
    if h_hat.is_empty() || h_hat.len() != poses.len() {
        return Err(Error::InvalidInput(format!(
            "{} channel estimates for {} poses",
            h_hat.len(),
            poses.len()
        )));
    }
    let k = h_hat[0].nrows();
    let n = layout.len();
    if h_hat.iter().any(|h| h.shape() != (k, n)) {
        return Err(Error::InvalidInput(format!("channel estimates must all be {k} x {n}")));
    }
    if poses.len() * n <= k {
        return Err(Error::InvalidInput(format!(
            "noise subspace is empty: MN = {} <= K = {k}",
            poses.len() * n
        )));
    }
    if cfg.search == MusicSearch::Direct && !coherent {
        return Err(Error::InvalidInput(
            "direct MUSIC search needs phase-coherent channel estimates".into(),
        ));
    }
    let grid = Grid::new(cfg.grid_step_deg)?;
    let step = cfg.grid_step_deg.to_radians();
    let manifold = Manifold::new(poses, layout, lambda, pattern, cfg.gain_weighted);
    let users: Vec<_> = (0..k).map(|u| user_channels(h_hat, u)).collect();
    let signal = signal_subspace(h_hat);

    // Coarse pass: magnitude score per user, and the MUSIC projection when
    // the direct search needs it.
    let nt = grid.thetas.len();
    let np = grid.phis.len();
    // Seeds: magnitude-score argmax per user. Exact ties (a planar
    // subarray cannot tell front from back on its own) go to the direction
    // with more element gain.
    let mut seeds = vec![(0.0, 0.0, f64::NEG_INFINITY, 0.0); k];
    let mut spectrum = vec![0.0; if cfg.search == MusicSearch::Direct { nt * np } else { 0 }];
    for (i, &t) in grid.thetas.iter().enumerate() {
        for (j, &p) in grid.phis.iter().enumerate() {
            let f = direction(t, p);
            let (sc, gs) = manifold.magnitude_scores(&f, &users);
            for (seed, s) in seeds.iter_mut().zip(sc) {
                if s > seed.2 + 1e-9 || (s > seed.2 - 1e-9 && gs > seed.3) {
                    *seed = (t, p, s, gs);
                }
            }
            if !spectrum.is_empty() {
                spectrum[i * np + j] = subspace_projection(&signal, &manifold, &f);
            }
        }
    }

    let coherent_eval = |t: f64, p: f64| subspace_projection(&signal, &manifold, &direction(t, p));
    let fine_step = step.min(0.25 * lambda / manifold.aperture().max(lambda));

    let mut directions = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    let mut peaks_found = None;
    match cfg.search {
        MusicSearch::Seeded => {
            for (u, &(t0, p0, _, _)) in seeds.iter().enumerate() {
                let h = &users[u];
                let magnitude = |t: f64, p: f64| manifold.magnitude_score(&direction(t, p), h);
                let (t1, p1, v1) = refine((t0, p0), step, &magnitude);
                let (t, p, v) = if coherent {
                    // The sparse stacked aperture has near-unity grating
                    // lobes: refine the strongest few window maxima.
                    window_maxima((t1, p1), 1.5 * step, fine_step, &coherent_eval)
                        .into_iter()
                        .take(8)
                        .map(|(t, p, _)| refine((t, p), fine_step, &coherent_eval))
                        .fold((t1, p1, f64::NEG_INFINITY), |a, b| if b.2 > a.2 { b } else { a })
                } else {
                    (t1, p1, v1)
                };
                directions.push(direction(t, p));
                scores.push(v);
            }
        }
        MusicSearch::Direct => {
            let peaks = direct_peaks(&grid, &spectrum, k, step, &coherent_eval);
            peaks_found = Some(peaks.len());
            if peaks.len() < k {
                log::warn!(
                    "MUSIC grid of {} deg separated only {} of {k} peaks; unmatched users fall back to their magnitude seed",
                    cfg.grid_step_deg,
                    peaks.len()
                );
            }
            let assigned = associate(&peaks, &users, &manifold);
            for u in 0..k {
                let (t, p, v) = match assigned[u] {
                    Some(i) => peaks[i],
                    None => {
                        let (t0, p0, _, _) = seeds[u];
                        refine((t0, p0), fine_step, &coherent_eval)
                    }
                };
                directions.push(direction(t, p));
                scores.push(v);
            }
        }
    }
    Ok(DoaEstimate {
        directions,
        scores,
        peaks_found,
    })
}

/// Local maxima of `eval` on a square window of half-width `half` around
/// `center`, sampled at `step` (stretched in azimuth by `1/cos(theta)`),
/// strongest first.
fn window_maxima(center: (f64, f64), half: f64, step: f64, eval: &dyn Fn(f64, f64) -> f64) -> Vec<(f64, f64, f64)> {
    let cnt = (half / step).ceil() as i64;
    let side = (2 * cnt + 1) as usize;
    let ct = center.0.cos().abs().max(1e-3);
    let sp = (step / ct).min(PI);
    let mut vals = vec![0.0; side * side];
    let at = |i: i64, j: i64| {
        let t = (center.0 + i as f64 * step).clamp(-FRAC_PI_2, FRAC_PI_2);
        (t, wrap_phi(center.1 + j as f64 * sp))
    };
    for i in 0..side {
        for j in 0..side {
            let (t, p) = at(i as i64 - cnt, j as i64 - cnt);
            vals[i * side + j] = eval(t, p);
        }
    }
    let mut out = Vec::new();
    for i in 0..side {
        for j in 0..side {
            let v = vals[i * side + j];
            let mut is_max = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0)
                        && (0..side as i64).contains(&ii)
                        && (0..side as i64).contains(&jj)
                        && vals[ii as usize * side + jj as usize] > v
                    {
                        is_max = false;
                    }
                }
            }
            if is_max {
                let (t, p) = at(i as i64 - cnt, j as i64 - cnt);
                out.push((t, p, v));
            }
        }
    }
    out.sort_by(|a, b| b.2.total_cmp(&a.2));
    out
}

/// Local maxima of the coarse spectrum, refined, deduplicated and cut to the
/// `k` strongest.
fn direct_peaks(
    grid: &Grid,
    spectrum: &[f64],
    k: usize,
    step: f64,
    eval: &dyn Fn(f64, f64) -> f64,
) -> Vec<(f64, f64, f64)> {
    let nt = grid.thetas.len();
    let np = grid.phis.len();
    let at = |i: usize, j: usize| spectrum[i * np + j];
    let mut maxima = Vec::new();
    for i in 0..nt {
        for j in 0..np {
            let v = at(i, j);
            let mut is_max = true;
            'nb: for di in [-1i64, 0, 1] {
                let ii = i as i64 + di;
                if ii < 0 || ii >= nt as i64 {
                    continue;
                }
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let jj = (j as i64 + dj).rem_euclid(np as i64) as usize;
                    if at(ii as usize, jj) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                maxima.push((grid.thetas[i], grid.phis[j], v));
            }
        }
    }
    maxima.sort_by(|a, b| b.2.total_cmp(&a.2));
    maxima.truncate(4 * k);

    let mut peaks: Vec<(f64, f64, f64)> = Vec::new();
    for (t, p, _) in maxima {
        let r = refine((t, p), step, eval);
        let f = direction(r.0, r.1);
        if peaks
            .iter()
            .all(|q| direction(q.0, q.1).dot(&f).clamp(-1.0, 1.0).acos() > 0.5 * step)
        {
            peaks.push(r);
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2));
    peaks.truncate(k);
    peaks
}

/// Greedy user-to-peak assignment by the per-user magnitude score.
fn associate(peaks: &[(f64, f64, f64)], users: &[Vec<DVector<C64>>], manifold: &Manifold) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (i, pk) in peaks.iter().enumerate() {
        let f = direction(pk.0, pk.1);
        for (u, h) in users.iter().enumerate() {
            pairs.push((manifold.magnitude_score(&f, h), u, i));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = vec![None; users.len()];
    let mut taken = vec![false; peaks.len()];
    for (_, u, i) in pairs {
        if out[u].is_none() && !taken[i] {
            out[u] = Some(i);
            taken[i] = true;
        }
    }
    out
}
