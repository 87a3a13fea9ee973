use crate::error::{Error, Result};
use crate::matcore::eig::{sym_eig_with, EigMethod};
use crate::matcore::{dot, norm2, Mat};

const RANK_RATIO: f64 = 1e-20;
const RESIDUAL_TOL: f64 = 1e-8;

/// Minimum-norm solution `A^T (A A^T)^{-1} b` via the eigendecomposition of `A A^T`.
pub fn lstsq_min_norm(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::ShapeMismatch {
            expected: (a.rows(), 1),
            got: (b.len(), 1),
        });
    }
    let gram = a.matmul_t(a).symmetrize();
    let eig = sym_eig_with(&gram, EigMethod::Tridiagonal)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 || lmin <= RANK_RATIO * lmax {
        return Err(Error::RankDeficient {
            ratio: if lmax > 0.0 { lmin / lmax } else { 0.0 },
        });
    }
    let qtb = eig.vectors.tmatvec(b);
    let scaled: Vec<f64> = qtb.iter().zip(&eig.values).map(|(c, l)| c / l).collect();
    let y = eig.vectors.matvec(&scaled);
    let x = a.tmatvec(&y);
    let resid: Vec<f64> = a.matvec(&x).iter().zip(b).map(|(p, q)| p - q).collect();
    if norm2(&resid) > RESIDUAL_TOL * norm2(b) {
        return Err(Error::RankDeficient { ratio: lmin / lmax });
    }
    Ok(x)
}

/// Prefactored `x -> A^T (A A^T)^{-1} x` for repeated affine projections.
///
/// Uses a Cholesky factor of `A A^T`; if that is numerically singular (for
/// example duplicated rows) it falls back to an eigen-based pseudo-inverse.
#[derive(Debug, Clone)]
pub struct MinNormSolver {
    a: Mat,
    factor: Factor,
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(Mat),
    Pseudo { q: Mat, inv: Vec<f64> },
}

impl MinNormSolver {
    pub fn new(a: &Mat) -> Result<MinNormSolver> {
        if !a.all_finite() {
            return Err(Error::NonFinite);
        }
        let gram = a.matmul_t(a).symmetrize();
        let factor = match cholesky(&gram) {
            Some(l) => Factor::Cholesky(l),
            None => {
                let eig = sym_eig_with(&gram, EigMethod::Tridiagonal)?;
                let lmax = eig.values.first().copied().unwrap_or(0.0);
                if lmax <= 0.0 {
                    return Err(Error::RankDeficient { ratio: 0.0 });
                }
                let inv = eig
                    .values
                    .iter()
                    .map(|&l| if l > 1e-12 * lmax { 1.0 / l } else { 0.0 })
                    .collect();
                Factor::Pseudo { q: eig.vectors, inv }
            }
        };
        Ok(MinNormSolver { a: a.clone(), factor })
    }

    pub fn matrix(&self) -> &Mat {
        &self.a
    }

    /// `(A A^T)^{-1} r` (pseudo-inverse when singular).
    pub fn gram_solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.factor {
            Factor::Cholesky(l) => cholesky_solve(l, r),
            Factor::Pseudo { q, inv } => {
                let c = q.tmatvec(r);
                let scaled: Vec<f64> = c.iter().zip(inv).map(|(c, i)| c * i).collect();
                q.matvec(&scaled)
            }
        }
    }

    /// `Q` with orthonormal rows spanning the row space of `A` (`L^{-1} A`, or
    /// `Λ^{-1/2} Q_g^T A` on the kept eigenpairs).
    pub fn row_basis(&self) -> Mat {
        let (m, n) = self.a.shape();
        match &self.factor {
            Factor::Cholesky(l) => {
                let mut q = self.a.clone();
                for i in 0..m {
                    for k in 0..i {
                        let c = l[(i, k)];
                        if c != 0.0 {
                            let (head, tail) = q.as_mut_slice().split_at_mut(i * n);
                            crate::matcore::axpy(-c, &head[k * n..(k + 1) * n], &mut tail[..n]);
                        }
                    }
                    let d = 1.0 / l[(i, i)];
                    q.row_mut(i).iter_mut().for_each(|v| *v *= d);
                }
                q
            }
            Factor::Pseudo { q, inv } => {
                let keep: Vec<usize> = (0..inv.len()).filter(|&i| inv[i] > 0.0).collect();
                let mut out = Mat::zeros(keep.len(), n);
                for (r, &i) in keep.iter().enumerate() {
                    let w: Vec<f64> = (0..m).map(|j| q[(j, i)]).collect();
                    let row = self.a.tmatvec(&w);
                    let s = inv[i].sqrt();
                    out.row_mut(r).iter_mut().zip(&row).for_each(|(o, v)| *o = v * s);
                }
                out
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.a.tmatvec(&self.gram_solve(b))
    }

    /// Euclidean projection of `v` onto `{x : A x = b}`, in place.
    pub fn project(&self, v: &mut [f64], b: &[f64]) {
        let mut r = self.a.matvec(v);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        let y = self.gram_solve(&r);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                crate::matcore::axpy(-yi, self.a.row(i), v);
            }
        }
    }
}

/// Lower Cholesky factor, or `None` when a pivot falls below `1e-13` of the
/// largest diagonal entry.
fn cholesky(g: &Mat) -> Option<Mat> {
    let n = g.rows();
    let dmax = (0..n).map(|i| g[(i, i)]).fold(0.0, f64::max);
    if dmax <= 0.0 {
        return None;
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let s = g[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if s <= 1e-13 * dmax {
            return None;
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let v = (g[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j])) / ljj;
            l[(i, j)] = v;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &y[..i]);
        y[i] = (y[i] - s) / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}
