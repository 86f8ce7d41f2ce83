//! Closed-form block updates of the augmented Lagrangian
//!
//! `L = sum_k rho_k (eps_k e_k - ln eps_k)
//!    + 1/(2 mu) sum_k ||w_k - w_bar_k + mu t_k||^2
//!    + 1/(2 mu) sum_b ||v_b - v_bar_b + mu t_bar_b||^2`.
//!
//! Every update is the exact minimizer of `L` over its block, so a sweep
//! never increases `L`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};

use super::wmmse::{lmmse_equalizer, mse, mse_weight};
use super::{FastInstance, FastState};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::C64;

/// Relative accuracy of the precoder power bisection.
pub const POWER_TOLERANCE: f64 = 1e-8;
const BISECTION_MAX_ITER: usize = 500;

fn penalty(x: &[Vector2<C64>], x_bar: &[Vector2<C64>], dual: &[Vector2<C64>], mu: f64) -> f64 {
    x.iter()
        .zip(x_bar)
        .zip(dual)
        .map(|((a, b), t)| (a - b + t * C64::from(mu)).norm_squared())
        .sum::<f64>()
        / (2.0 * mu)
}

pub fn augmented_lagrangian(inst: &FastInstance, st: &FastState) -> f64 {
    let hs = inst.channels(&st.w, &st.v);
    let wmmse: f64 = hs
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let e = mse(h, &st.c, k, st.xi[k], inst.sigma2());
            inst.weights()[k] * (st.eps[k] * e - st.eps[k].ln())
        })
        .sum();
    wmmse + penalty(&st.w, &st.w_bar, &st.t, st.mu) + penalty(&st.v, &st.v_bar, &st.t_bar, st.mu)
}

fn solve2(c: &Matrix2<C64>, b: &Vector2<C64>) -> Result<Vector2<C64>> {
    c.lu()
        .solve(b)
        .ok_or_else(|| Error::InvalidInput(format!("singular 2x2 system {c:?}")))
}

/// `w_k = C_k^{-1} b_k` for every user.
pub fn update_user_polarforming(inst: &FastInstance, st: &mut FastState) -> Result<()> {
    let inv_mu = C64::from(1.0 / st.mu);
    for k in 0..inst.users() {
        let m = inst.user_factor(k, &st.v);
        let coef = inst.weights()[k] * st.eps[k];
        let mut c = Matrix2::identity() * inv_mu;
        let mut rhs = (st.w_bar[k] - st.t[k] * C64::from(st.mu)) * inv_mu;
        for (j, cj) in st.c.iter().enumerate() {
            let mc = m.ad_mul(cj);
            let mc = Vector2::new(mc[0], mc[1]);
            c += mc * mc.adjoint() * C64::from(2.0 * coef * st.xi[k].norm_sqr());
            if j == k {
                rhs += mc * (st.xi[k] * 2.0 * coef);
            }
        }
        st.w[k] = solve2(&c, &rhs)?;
    }
    Ok(())
}

/// Gauss-Seidel sweep over subarrays; each `v_b` is the exact minimizer
/// with the other subarrays' contributions held fixed.
pub fn update_bs_polarforming(inst: &FastInstance, st: &mut FastState) -> Result<()> {
    let (kk, bb, n) = (inst.users(), inst.subarrays(), inst.antennas_per_subarray());
    let inv_mu = C64::from(1.0 / st.mu);
    // d[k][b] = A_kb w_k, gamma[k][j][b] = hlos_kb^H c_{j,b}
    let d: Vec<Vec<Vector2<C64>>> = (0..kk)
        .map(|k| (0..bb).map(|b| inst.response(k, b) * st.w[k]).collect())
        .collect();
    let gamma: Vec<Vec<Vec<C64>>> = (0..kk)
        .map(|k| {
            st.c.iter()
                .map(|cj| (0..bb).map(|b| inst.hlos(k, b).dotc(&cj.rows(b * n, n))).collect())
                .collect()
        })
        .collect();
    // g[k][j] = h_k^H c_j
    let mut g: Vec<Vec<C64>> = (0..kk)
        .map(|k| {
            (0..kk)
                .map(|j| (0..bb).map(|b| gamma[k][j][b] * d[k][b].dotc(&st.v[b])).sum())
                .collect()
        })
        .collect();
    for b in 0..bb {
        let mut c = Matrix2::identity() * inv_mu;
        let mut rhs = (st.v_bar[b] - st.t_bar[b] * C64::from(st.mu)) * inv_mu;
        let mut rest = vec![vec![C64::new(0.0, 0.0); kk]; kk];
        for k in 0..kk {
            let coef = inst.weights()[k] * st.eps[k];
            let q = 2.0 * coef * st.xi[k].norm_sqr();
            let dd = d[k][b] * d[k][b].adjoint();
            let own = d[k][b].dotc(&st.v[b]);
            for j in 0..kk {
                let gm = gamma[k][j][b];
                let r = g[k][j] - gm * own;
                rest[k][j] = r;
                c += dd * C64::from(q * gm.norm_sqr());
                rhs -= d[k][b] * (gm.conj() * r * q);
            }
            rhs += d[k][b] * (st.xi[k].conj() * gamma[k][k][b].conj() * 2.0 * coef);
        }
        let vb = solve2(&c, &rhs)?;
        st.v[b] = vb;
        for k in 0..kk {
            let own = d[k][b].dotc(&vb);
            for j in 0..kk {
                g[k][j] = rest[k][j] + gamma[k][j][b] * own;
            }
        }
    }
    Ok(())
}

pub(crate) fn project_user_auxiliaries(st: &mut FastState, cb: &Codebook) {
    let mu = C64::from(st.mu);
    for (wb, (w, t)) in st.w_bar.iter_mut().zip(st.w.iter().zip(&st.t)) {
        *wb = cb.project_vector(&(w + t * mu));
    }
}

pub(crate) fn project_bs_auxiliaries(st: &mut FastState, cb: &Codebook) {
    let mu = C64::from(st.mu);
    for (vb, (v, t)) in st.v_bar.iter_mut().zip(st.v.iter().zip(&st.t_bar)) {
        *vb = cb.project_vector(&(v + t * mu));
    }
}

/// Entrywise codebook projection of `w + mu t` and `v + mu t_bar`.
pub fn project_auxiliaries(st: &mut FastState, cb: &Codebook) {
    project_user_auxiliaries(st, cb);
    project_bs_auxiliaries(st, cb);
}

pub fn update_equalizers(inst: &FastInstance, st: &mut FastState) {
    let hs = inst.channels(&st.w, &st.v);
    for (k, h) in hs.iter().enumerate() {
        st.xi[k] = lmmse_equalizer(h, &st.c, k, inst.sigma2());
    }
}

pub fn update_weights(inst: &FastInstance, st: &mut FastState) -> Result<()> {
    let hs = inst.channels(&st.w, &st.v);
    for (k, h) in hs.iter().enumerate() {
        st.eps[k] = mse_weight(mse(h, &st.c, k, st.xi[k], inst.sigma2()), k)?;
    }
    Ok(())
}

/// Precoders `c_k(mu) = rho_k eps_k xi_k^* (mu I + G)^{-1} h_k` with
/// `G = sum_j rho_j eps_j |xi_j|^2 h_j h_j^H`. Returns the multiplier `mu`
/// of the power constraint (zero when it is inactive).
pub fn update_precoders(inst: &FastInstance, st: &mut FastState) -> Result<f64> {
    let nb = inst.antennas();
    let zeta = inst.zeta();
    let hs = inst.channels(&st.w, &st.v);
    let mut g = DMatrix::<C64>::zeros(nb, nb);
    for (k, h) in hs.iter().enumerate() {
        let s = inst.weights()[k] * st.eps[k] * st.xi[k].norm_sqr();
        g += h * h.adjoint() * C64::from(s);
    }
    let eig = SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
    let keep: Vec<bool> = eig.eigenvalues.iter().map(|&l| l > 1e-12 * lmax && l > 0.0).collect();
    // projections of the scaled channels onto the eigenbasis
    let proj: Vec<DVector<C64>> = hs
        .iter()
        .enumerate()
        .map(|(k, h)| eig.eigenvectors.ad_mul(h) * (st.xi[k].conj() * inst.weights()[k] * st.eps[k]))
        .collect();
    let q: Vec<f64> = (0..nb).map(|i| proj.iter().map(|p| p[i].norm_sqr()).sum()).collect();
    let power = |m: f64| -> f64 {
        (0..nb)
            .filter(|&i| keep[i])
            .map(|i| q[i] / (eig.eigenvalues[i] + m).powi(2))
            .sum()
    };
    let build = |m: f64| -> Vec<DVector<C64>> {
        proj.iter()
            .map(|p| {
                let scaled = DVector::from_fn(nb, |i, _| {
                    if keep[i] {
                        p[i] / (eig.eigenvalues[i] + m)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                &eig.eigenvectors * scaled
            })
            .collect()
    };

    if power(0.0) <= zeta {
        st.c = build(0.0);
        return Ok(0.0);
    }
    let qsum: f64 = q.iter().zip(&keep).filter(|(_, k)| **k).map(|(q, _)| q).sum();
    let (mut lo, mut hi) = (0.0, (qsum / zeta).sqrt());
    if !(power(hi) <= zeta) {
        return Err(Error::Bisection(format!(
            "upper bracket {hi:e} gives power {:e} > zeta {zeta:e}",
            power(hi)
        )));
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let p = power(mid);
        if (p - zeta).abs() <= POWER_TOLERANCE * zeta {
            st.c = build(mid);
            return Ok(mid);
        }
        if p > zeta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let p = power(hi);
    if (p - zeta).abs() <= POWER_TOLERANCE * zeta {
        st.c = build(hi);
        return Ok(hi);
    }
    Err(Error::Bisection(format!(
        "bracket [{lo:e}, {hi:e}] collapsed with power {p:e} vs zeta {zeta:e}"
    )))
}

/// One BCD sweep in the order w, w_bar, v, v_bar, xi, eps, c. Returns the
/// augmented Lagrangian after each block.
pub fn inner_sweep(inst: &FastInstance, st: &mut FastState, cb: &Codebook) -> Result<[f64; 7]> {
    let mut out = [0.0; 7];
    update_user_polarforming(inst, st)?;
    out[0] = augmented_lagrangian(inst, st);
    project_user_auxiliaries(st, cb);
    out[1] = augmented_lagrangian(inst, st);
    update_bs_polarforming(inst, st)?;
    out[2] = augmented_lagrangian(inst, st);
    project_bs_auxiliaries(st, cb);
    out[3] = augmented_lagrangian(inst, st);
    update_equalizers(inst, st);
    out[4] = augmented_lagrangian(inst, st);
    update_weights(inst, st)?;
    out[5] = augmented_lagrangian(inst, st);
    update_precoders(inst, st)?;
    out[6] = augmented_lagrangian(inst, st);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Real parametrization of a list of 2-vectors.
    fn to_real(x: &[Vector2<C64>]) -> Vec<f64> {
        x.iter()
            .flat_map(|v| v.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect()
    }

    fn from_real(r: &[f64]) -> Vec<Vector2<C64>> {
        r.chunks(4)
            .map(|c| Vector2::new(C64::new(c[0], c[1]), C64::new(c[2], c[3])))
            .collect()
    }

    /// Minimizer of a quadratic from finite-difference gradient and Hessian.
    fn quadratic_minimizer(f: impl Fn(&[f64]) -> f64, x0: &[f64]) -> Vec<f64> {
        let n = x0.len();
        let h = 1e-3;
        let at = |dx: &[(usize, f64)]| {
            let mut x = x0.to_vec();
            for &(i, d) in dx {
                x[i] += d;
            }
            f(&x)
        };
        let f0 = f(x0);
        let grad = DVector::from_fn(n, |i, _| (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h));
        let hess = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h)
            } else {
                (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)]) + at(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            }
        });
        let step = hess.lu().solve(&grad).unwrap();
        x0.iter().zip(step.iter()).map(|(x, s)| x - s).collect()
    }

    fn grad_norm(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                ((f(&a) - f(&b)) / (2.0 * h)).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn zero_precoders_give_prox_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let inst = random_instance(&mut rng, 2, 3, 2);
        let mut st = random_state(&mut rng, &inst);
        for c in &mut st.c {
            c.fill(C64::new(0.0, 0.0));
        }
        update_user_polarforming(&inst, &mut st).unwrap();
        update_bs_polarforming(&inst, &mut st).unwrap();
        let mu = C64::from(st.mu);
        for k in 0..2 {
            assert!((st.w[k] - (st.w_bar[k] - st.t[k] * mu)).norm() < 1e-14);
        }
        for b in 0..3 {
            assert!((st.v[b] - (st.v_bar[b] - st.t_bar[b] * mu)).norm() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn user_update_matches_numeric_qp(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.random_range(1..4);
            let nb = rng.random_range(1..4);
            let nn = rng.random_range(1..3);
            let inst = random_instance(&mut rng, k, nb, nn);
            let mut st = random_state(&mut rng, &inst);
            let base = st.clone();
            let f = |r: &[f64]| {
                let mut s = base.clone();
                s.w = from_real(r);
                augmented_lagrangian(&inst, &s)
            };
            let oracle = quadratic_minimizer(f, &to_real(&base.w));
            update_user_polarforming(&inst, &mut st).unwrap();
            let got = to_real(&st.w);
            let scale = 1.0 + oracle.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for (a, b) in got.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-6 * scale, "{:?} vs {:?}", got, oracle);
            }
            prop_assert!(grad_norm(f, &got) < 1e-6 * (1.0 + f(&got).abs()));
        }

        #[test]
        fn bs_update_matches_numeric_qp_per_subarray(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bb = rng.random_range(1..4);
            let nk = rng.random_range(1..4);
            let nn = rng.random_range(1..3);
            let inst = random_instance(&mut rng, nk, bb, nn);
            let st0 = random_state(&mut rng, &inst);
            // sweep order: subarray b is optimized with 0..b already updated
            let mut swept = st0.clone();
            update_bs_polarforming(&inst, &mut swept).unwrap();
            for b in 0..bb {
                let mut base = st0.clone();
                base.v[..b].copy_from_slice(&swept.v[..b]);
                let f = |r: &[f64]| {
                    let mut s = base.clone();
                    s.v[b] = from_real(r)[0];
                    augmented_lagrangian(&inst, &s)
                };
                let oracle = quadratic_minimizer(f, &to_real(&base.v[b..=b]));
                let got = to_real(&swept.v[b..=b]);
                let scale = 1.0 + oracle.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                for (a, o) in got.iter().zip(&oracle) {
                    prop_assert!((a - o).abs() < 1e-6 * scale, "b={} {:?} vs {:?}", b, got, oracle);
                }
                prop_assert!(grad_norm(f, &got) < 1e-6 * (1.0 + f(&got).abs()));
            }
            prop_assert!(augmented_lagrangian(&inst, &swept) <= augmented_lagrangian(&inst, &st0) * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn precoder_power_is_monotone_and_met(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nk = rng.random_range(1..5);
            let nb = rng.random_range(1..4);
            let nn = rng.random_range(1..3);
            let inst = random_instance(&mut rng, nk, nb, nn);
            let mut st = random_state(&mut rng, &inst);
            let m = update_precoders(&inst, &mut st).unwrap();
            let p = st.power();
            if m > 0.0 {
                prop_assert!((p - inst.zeta()).abs() <= POWER_TOLERANCE * inst.zeta());
            } else {
                prop_assert!(p <= inst.zeta() * (1.0 + POWER_TOLERANCE));
            }
            // power of c(mu) strictly decreases in mu
            let mut last = f64::INFINITY;
            for mu in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
                let mut s = st.clone();
                let hs = inst.channels(&s.w, &s.v);
                let nb = inst.antennas();
                let mut g = DMatrix::<C64>::identity(nb, nb) * C64::from(mu);
                for (k, h) in hs.iter().enumerate() {
                    g += h * h.adjoint() * C64::from(inst.weights()[k] * s.eps[k] * s.xi[k].norm_sqr());
                }
                let lu = g.lu();
                for (k, h) in hs.iter().enumerate() {
                    s.c[k] = lu.solve(h).unwrap() * (s.xi[k].conj() * inst.weights()[k] * s.eps[k]);
                }
                let pw = s.power();
                prop_assert!(pw < last);
                last = pw;
            }
        }
    }

    #[test]
    fn precoder_update_is_the_constrained_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 3, 2, 2);
            let mut st = random_state(&mut rng, &inst);
            let before = augmented_lagrangian(&inst, &st);
            update_precoders(&inst, &mut st).unwrap();
            let best = augmented_lagrangian(&inst, &st);
            assert!(best <= before + 1e-12);
            // random feasible perturbations never do better
            for _ in 0..50 {
                let mut s = st.clone();
                for c in &mut s.c {
                    *c += cvec(&mut rng, c.len()) * C64::from(0.05);
                }
                let p = s.power();
                if p > inst.zeta() {
                    let r = C64::from((inst.zeta() / p).sqrt());
                    for c in &mut s.c {
                        *c *= r;
                    }
                }
                assert!(augmented_lagrangian(&inst, &s) >= best - 1e-10);
            }
        }
    }

    #[test]
    fn interior_and_active_branches() {
        // c(0) scales like 1/xi: large equalizers leave the budget slack,
        // small ones hit it
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let inst = random_instance(&mut rng, 2, 2, 2);
        let mut st = random_state(&mut rng, &inst);
        st.xi = vec![C64::new(1e4, 0.0), C64::new(0.0, 1e4)];
        assert_eq!(update_precoders(&inst, &mut st).unwrap(), 0.0);
        assert!(st.power() < inst.zeta());
        st.xi = vec![C64::new(1e-4, 0.0), C64::new(0.0, 1e-4)];
        assert!(update_precoders(&inst, &mut st).unwrap() > 0.0);
        assert!((st.power() / inst.zeta() - 1.0).abs() <= POWER_TOLERANCE);
    }

    #[test]
    fn projection_is_entrywise_and_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let cb = Codebook::new(1, 3).unwrap();
        let inst = random_instance(&mut rng, 3, 2, 1);
        let mut st = random_state(&mut rng, &inst);
        project_auxiliaries(&mut st, &cb);
        let mu = C64::from(st.mu);
        for (wb, (w, t)) in st.w_bar.iter().zip(st.w.iter().zip(&st.t)) {
            for i in 0..2 {
                assert_eq!(wb[i], cb.project_exhaustive(w[i] + t[i] * mu));
            }
        }
        // a codeword with zero dual stays put
        let mut s = st.clone();
        s.t.iter_mut().for_each(|t| *t = Vector2::zeros());
        s.w = s.w_bar.clone();
        let before = s.w_bar.clone();
        project_auxiliaries(&mut s, &cb);
        assert_eq!(s.w_bar, before);
        // swapping entries swaps outputs
        let mut sw = st.clone();
        for w in &mut sw.w {
            w.swap_rows(0, 1);
        }
        for t in &mut sw.t {
            t.swap_rows(0, 1);
        }
        project_auxiliaries(&mut sw, &cb);
        for (a, b) in sw.w_bar.iter().zip(&st.w_bar) {
            assert_eq!(a[0], b[1]);
            assert_eq!(a[1], b[0]);
        }
    }

    #[test]
    fn sweep_never_increases_lagrangian() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let cb = Codebook::new(1, 3).unwrap();
        for _ in 0..20 {
            let nk = rng.random_range(1..5);
            let nb = rng.random_range(1..5);
            let nn = rng.random_range(1..3);
            let inst = random_instance(&mut rng, nk, nb, nn);
            let mut st = random_state(&mut rng, &inst);
            // auxiliaries start feasible, as they do in the solver
            st.w_bar = st.w_bar.iter().map(|x| cb.project_vector(x)).collect();
            st.v_bar = st.v_bar.iter().map(|x| cb.project_vector(x)).collect();
            update_equalizers(&inst, &mut st);
            update_weights(&inst, &mut st).unwrap();
            update_precoders(&inst, &mut st).unwrap();
            let mut last = augmented_lagrangian(&inst, &st);
            for _ in 0..5 {
                for (i, l) in inner_sweep(&inst, &mut st, &cb).unwrap().into_iter().enumerate() {
                    // the precoder block solves its power equation to POWER_TOLERANCE
                    assert!(l <= last + 1e-7 * last.abs().max(1.0), "block {i}: {last} -> {l}");
                    last = l;
                }
            }
        }
    }
}
