use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::eig::{sym_eig_with, EigMethod};
use crate::matcore::{norm2, Mat};

/// Relative threshold below which singular values count as numerically zero.
pub const RANK_TOL: f64 = 1e-12;

/// Thin SVD `x = u diag(s) vt` with `r_num = min(rows, cols)` triplets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdResult {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
    /// Number of singular values above `RANK_TOL * s_max`.
    pub rank: usize,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Mat {
        self.recompose(&self.s)
    }

    /// `u diag(values) vt` for replacement singular values.
    pub fn recompose(&self, values: &[f64]) -> Mat {
        let mut us = self.u.clone();
        let k = values.len();
        for i in 0..us.rows() {
            for (j, &v) in values.iter().enumerate().take(k) {
                us[(i, j)] *= v;
            }
        }
        us.matmul(&self.vt)
    }
}

/// Thin SVD through the eigendecomposition of the smaller Gram matrix.
///
/// Exactly symmetric square inputs skip the Gram matrix and use their own
/// eigendecomposition, which keeps full precision in the small singular values.
pub fn svd(x: &Mat) -> Result<SvdResult> {
    if !x.all_finite() {
        return Err(Error::NonFinite);
    }
    if x.is_square() && x.asymmetry() == 0.0 {
        return Ok(svd_symmetric(x));
    }
    if x.rows() < x.cols() {
        let t = svd(&x.transpose())?;
        return Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
            rank: t.rank,
        });
    }
    Ok(svd_tall(x))
}

fn svd_symmetric(x: &Mat) -> SvdResult {
    let n = x.rows();
    let eig = sym_eig_with(x, EigMethod::Tridiagonal).expect("symmetric input");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.values[j].abs().total_cmp(&eig.values[i].abs()));
    let s: Vec<f64> = order.iter().map(|&i| eig.values[i].abs()).collect();
    let u = Mat::from_fn(n, n, |r, c| eig.vectors[(r, order[c])]);
    let vt = Mat::from_fn(n, n, |r, c| {
        let lambda = eig.values[order[r]];
        let sign = if lambda < 0.0 { -1.0 } else { 1.0 };
        sign * eig.vectors[(c, order[r])]
    });
    let rank = numerical_rank(&s);
    SvdResult { u, s, vt, rank }
}

fn svd_tall(x: &Mat) -> SvdResult {
    let (m, n) = x.shape();
    let gram = x.tmatmul(x).symmetrize();
    let eig = sym_eig_with(&gram, EigMethod::Tridiagonal).expect("gram matrix is symmetric");
    let v = eig.vectors;
    // sigma_j = ||X v_j|| resolves small singular values far better than sqrt(lambda_j).
    let xv = x.matmul(&v);
    let s_raw = xv.column_norms();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s_raw[j].total_cmp(&s_raw[i]));
    let s: Vec<f64> = order.iter().map(|&i| s_raw[i]).collect();
    let rank = numerical_rank(&s);

    let mut u = Mat::zeros(m, n);
    for (c, &src) in order.iter().enumerate().take(rank) {
        for r in 0..m {
            u[(r, c)] = xv[(r, src)] / s[c];
        }
    }
    let vt = Mat::from_fn(n, n, |r, c| v[(c, order[r])]);
    orthonormalize_columns(&mut u, rank);
    SvdResult { u, s, vt, rank }
}

fn numerical_rank(s: &[f64]) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_TOL * smax).count()
}

/// Modified Gram-Schmidt (two passes) on the first `keep` columns, then
/// completes the remaining columns from the standard basis.
fn orthonormalize_columns(u: &mut Mat, keep: usize) {
    let (m, n) = u.shape();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..keep {
        let mut c = u.col(j);
        for _ in 0..2 {
            for prev in &cols {
                let p = crate::matcore::dot(prev, &c);
                crate::matcore::axpy(-p, prev, &mut c);
            }
        }
        let nrm = norm2(&c);
        for ci in &mut c {
            *ci /= nrm;
        }
        cols.push(c);
    }
    let mut basis = 0;
    while cols.len() < n && basis < m {
        let mut c = vec![0.0; m];
        c[basis] = 1.0;
        basis += 1;
        for _ in 0..2 {
            for prev in &cols {
                let p = crate::matcore::dot(prev, &c);
                crate::matcore::axpy(-p, prev, &mut c);
            }
        }
        let nrm = norm2(&c);
        if nrm > 1e-6 {
            for ci in &mut c {
                *ci /= nrm;
            }
            cols.push(c);
        }
    }
    for (j, c) in cols.iter().enumerate() {
        u.set_col(j, c);
    }
}

pub fn max_singular(a: &Mat) -> Result<f64> {
    Ok(svd(a)?.s.first().copied().unwrap_or(0.0))
}

/// Smallest of the `min(rows, cols)` singular values; zero below numerical rank.
pub fn min_singular(a: &Mat) -> Result<f64> {
    let r = svd(a)?;
    if r.rank < r.s.len() {
        return Ok(0.0);
    }
    Ok(r.s.last().copied().unwrap_or(0.0))
}
