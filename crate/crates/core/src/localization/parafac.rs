//! Alternating least squares for the pilot PARAFAC model with known pilots.
//!
//! With `X` known, only `H` (K x N) and `Omega` (P x K) are estimated:
//! `H <- (Omega o X)^+ Y2`, then `Omega^T <- (X o H^T)^+ Y3`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::tensor::{khatri_rao, Tensor3};
use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlsConfig {
    /// Stop once both relative factor changes fall below this.
    pub kappa: f64,
    pub max_iter: usize,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            kappa: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlsOutput {
    /// K x N; row `k` is the scaled unpolarformed channel of user `k`.
    pub h: DMatrix<C64>,
    /// P x K with unit-norm columns.
    pub omega: DMatrix<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual `||Y - model||_F^2` after every half-step.
    pub objective: Vec<f64>,
    /// Noise variance per complex entry, from the final residual and the
    /// model's degrees of freedom. Zero when the model is saturated.
    pub noise_var: f64,
}

/// Least-squares solve through the SVD, refusing rank-deficient systems.
fn ls_solve(a: &DMatrix<C64>, b: &DMatrix<C64>, mode: usize, pose: usize) -> Result<DMatrix<C64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-10 {
        return Err(Error::RankDeficient {
            mode,
            pose,
            detail: format!("singular values span [{smin:e}, {smax:e}]"),
        });
    }
    svd.solve(b, 0.0).map_err(|e| Error::RankDeficient {
        mode,
        pose,
        detail: e.to_string(),
    })
}

/// Eigenvectors of the `k` largest eigenvalues of a Hermitian matrix, as
/// columns. Missing columns (k > dim) are filled with fixed phase ramps.
pub(crate) fn top_eigenvectors(g: DMatrix<C64>, k: usize) -> DMatrix<C64> {
    let dim = g.nrows();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    DMatrix::from_fn(dim, k, |r, c| {
        if c < dim {
            eig.eigenvectors[(r, order[c])]
        } else {
            C64::from_polar(1.0 / (dim as f64).sqrt(), 0.7 * ((c + 1) * r) as f64)
        }
    })
}

/// Fits `Y = X diag(Omega[p,:]) H` for one training pose.
///
/// Afterwards each column of `Omega` is scaled to unit norm and the scale is
/// moved into the matching row of `H`.
pub fn als_parafac(y: &Tensor3, x: &DMatrix<C64>, cfg: &AlsConfig, pose: usize) -> Result<AlsOutput> {
    let [l, n, p] = y.dims();
    let k = x.ncols();
    if x.nrows() != l || k == 0 || l < k || l * p < k || l * n < k {
        return Err(Error::InvalidInput(format!(
            "ALS needs K <= L, K <= LP, K <= LN; got K={k}, L={l} (pilots {}x{}), N={n}, P={p}",
            x.nrows(),
            x.ncols()
        )));
    }
    let y2 = y.unfold(2)?;
    let y3 = y.unfold(3)?;

    let mut h = top_eigenvectors(y2.adjoint() * &y2, k).adjoint();
    let mut omega = top_eigenvectors(y3.adjoint() * &y3, k).map(|z| z.conj());

    let mut objective = Vec::with_capacity(2 * cfg.max_iter);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let a2 = khatri_rao(&omega, x);
        let h_new = ls_solve(&a2, &y2, 2, pose)?;
        objective.push((&y2 - &a2 * &h_new).norm_squared());

        let a3 = khatri_rao(x, &h_new.transpose());
        let omega_t = ls_solve(&a3, &y3, 3, pose)?;
        objective.push((&y3 - &a3 * &omega_t).norm_squared());
        let omega_new = omega_t.transpose();

        let dh = (&h_new - &h).norm_squared() / h_new.norm_squared();
        let dw = (&omega_new - &omega).norm_squared() / omega_new.norm_squared();
        h = h_new;
        omega = omega_new;
        if dh <= cfg.kappa && dw <= cfg.kappa {
            converged = true;
            break;
        }
    }

    for c in 0..k {
        let s = omega.column(c).norm();
        if s > 0.0 {
            omega.column_mut(c).unscale_mut(s);
            h.row_mut(c).scale_mut(s);
        }
    }
    let dof = (l * n * p).saturating_sub(k * (n + p - 1));
    let noise_var = match (objective.last(), dof) {
        (Some(r), d) if d > 0 => r / d as f64,
        _ => 0.0,
    };
    Ok(AlsOutput {
        h,
        omega,
        iterations,
        converged,
        objective,
        noise_var,
    })
}

/// NMSE of `est` against `truth` after fitting one complex scale per
/// column: `sum_k ||a_k est_k - truth_k||^2 / ||truth||^2`.
pub fn columnwise_scaled_nmse(est: &DMatrix<C64>, truth: &DMatrix<C64>) -> f64 {
    assert_eq!(est.shape(), truth.shape());
    let mut err = 0.0;
    for (e, t) in est.column_iter().zip(truth.column_iter()) {
        let ee = e.norm_squared();
        let a = if ee > 0.0 { e.dotc(&t) / ee } else { C64::new(0.0, 0.0) };
        err += (e * a - t).norm_squared();
    }
    err / truth.norm_squared()
}
