//! Three-way arrays, their matrix unfoldings and the Khatri-Rao product.
//!
//! A pilot tensor `Z` has shape `L x N x P` (pilot slot, BS antenna, pilot
//! block). With factors `X` (L x K), `H` (K x N) and `Omega` (P x K):
//!
//! ```text
//! Z[l, n, p] = sum_k X[l, k] H[k, n] Omega[p, k]
//! mode 1:  (H^T o Omega) X^T   PN x L, row n*P + p
//! mode 2:  (Omega o X)   H     LP x N, row p*L + l
//! mode 3:  (X o H^T) Omega^T   LN x P, row l*N + n
//! ```

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// Column-wise Kronecker product. Row `i * J + j` of the result is
/// `a[i, :] .* b[j, :]`.
pub fn khatri_rao(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    assert_eq!(a.ncols(), b.ncols(), "Khatri-Rao factors need equal column counts");
    let (i, j, k) = (a.nrows(), b.nrows(), a.ncols());
    DMatrix::from_fn(i * j, k, |r, c| a[(r / j, c)] * b[(r % j, c)])
}

/// Dense `L x N x P` complex array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(l: usize, n: usize, p: usize) -> Self {
        Self {
            dims: [l, n, p],
            data: vec![C64::new(0.0, 0.0); l * n * p],
        }
    }

    /// Noiseless trilinear model built entry by entry.
    pub fn from_factors(x: &DMatrix<C64>, h: &DMatrix<C64>, omega: &DMatrix<C64>) -> Self {
        let k = x.ncols();
        assert!(h.nrows() == k && omega.ncols() == k, "factor ranks disagree");
        let (l, n, p) = (x.nrows(), h.ncols(), omega.nrows());
        let mut t = Self::zeros(l, n, p);
        for li in 0..l {
            for ni in 0..n {
                for pi in 0..p {
                    let mut s = C64::new(0.0, 0.0);
                    for ki in 0..k {
                        s += x[(li, ki)] * h[(ki, ni)] * omega[(pi, ki)];
                    }
                    t[(li, ni, pi)] = s;
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Matrix unfolding for `mode` in `1..=3`.
    pub fn unfold(&self, mode: usize) -> Result<DMatrix<C64>> {
        let [l, n, p] = self.dims;
        let m = match mode {
            1 => DMatrix::from_fn(n * p, l, |r, c| self[(c, r / p, r % p)]),
            2 => DMatrix::from_fn(l * p, n, |r, c| self[(r % l, c, r / l)]),
            3 => DMatrix::from_fn(l * n, p, |r, c| self[(r / n, r % n, c)]),
            _ => return Err(Error::InvalidInput(format!("unfolding mode {mode} not in 1..=3"))),
        };
        Ok(m)
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn refold(m: &DMatrix<C64>, mode: usize, dims: [usize; 3]) -> Result<Self> {
        let [l, n, p] = dims;
        let expect = match mode {
            1 => (n * p, l),
            2 => (l * p, n),
            3 => (l * n, p),
            _ => return Err(Error::InvalidInput(format!("unfolding mode {mode} not in 1..=3"))),
        };
        if m.shape() != expect {
            return Err(Error::InvalidInput(format!(
                "mode-{mode} unfolding of {dims:?} must be {expect:?}, got {:?}",
                m.shape()
            )));
        }
        let mut t = Self::zeros(l, n, p);
        for li in 0..l {
            for ni in 0..n {
                for pi in 0..p {
                    t[(li, ni, pi)] = match mode {
                        1 => m[(ni * p + pi, li)],
                        2 => m[(pi * l + li, ni)],
                        _ => m[(li * n + ni, pi)],
                    };
                }
            }
        }
        Ok(t)
    }
}

impl std::ops::Index<(usize, usize, usize)> for Tensor3 {
    type Output = C64;

    fn index(&self, (l, n, p): (usize, usize, usize)) -> &C64 {
        let [_, nn, pp] = self.dims;
        &self.data[(l * nn + n) * pp + p]
    }
}

impl std::ops::IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (l, n, p): (usize, usize, usize)) -> &mut C64 {
        let [_, nn, pp] = self.dims;
        &mut self.data[(l * nn + n) * pp + p]
    }
}
