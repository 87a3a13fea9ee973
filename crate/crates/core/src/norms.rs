//! The four structure-inducing norms: entrywise ℓ1, column/row ℓ1,2 and the
//! nuclear norm.
//!
//! All four are decomposable: at a nonzero `x` there is a support subspace `T`
//! and a sign matrix `e ∈ T` such that
//! `∂‖x‖ = { e + w : w ∈ T⊥, ‖w‖* ≤ 1 }`. [`SignedSupport`] carries `(e, T)`.
//!
//! Every ball projection reduces to projecting a nonnegative "magnitude"
//! vector (absolute entries, column norms, singular values) onto the
//! ℓ1 ball, done with the sort-based simplex algorithm in [`SortedMagnitudes`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{svd, Mat, Rng, SvdResult};

/// Relative tolerance below which entries, columns or singular values count as
/// off-support.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L1,
    L12Cols,
    L12Rows,
    Nuclear,
}

impl NormKind {
    pub const ALL: [NormKind; 4] = [NormKind::L1, NormKind::L12Cols, NormKind::L12Rows, NormKind::Nuclear];

    /// Global Lipschitz constant w.r.t. the Frobenius norm on `d1 x d2`.
    pub fn lipschitz(self, d1: usize, d2: usize) -> f64 {
        match self {
            NormKind::L1 => ((d1 * d2) as f64).sqrt(),
            NormKind::L12Cols => (d2 as f64).sqrt(),
            NormKind::L12Rows => (d1 as f64).sqrt(),
            NormKind::Nuclear => (d1.min(d2) as f64).sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L12Cols => "l12_cols",
            NormKind::L12Rows => "l12_rows",
            NormKind::Nuclear => "nuclear",
        }
    }

    pub fn parse(s: &str) -> Option<NormKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Some(NormKind::L1),
            "l12" | "l12_cols" | "l12cols" => Some(NormKind::L12Cols),
            "l12_rows" | "l12rows" => Some(NormKind::L12Rows),
            "nuclear" | "nuc" | "trace" | "tr" => Some(NormKind::Nuclear),
            _ => None,
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn eval(kind: NormKind, x: &Mat) -> f64 {
    match kind {
        NormKind::L1 => x.as_slice().iter().map(|v| v.abs()).sum(),
        NormKind::L12Cols => x.column_norms().iter().sum(),
        NormKind::L12Rows => x.row_norms().iter().sum(),
        NormKind::Nuclear => svd(x).map(|r| r.s.iter().sum()).unwrap_or(f64::NAN),
    }
}

pub fn dual_eval(kind: NormKind, x: &Mat) -> f64 {
    match kind {
        NormKind::L1 => x.max_abs(),
        NormKind::L12Cols => x.column_norms().into_iter().fold(0.0, f64::max),
        NormKind::L12Rows => x.row_norms().into_iter().fold(0.0, f64::max),
        NormKind::Nuclear => svd(x).map(|r| r.s[0]).unwrap_or(f64::NAN),
    }
}

/// Nonnegative magnitudes sorted in decreasing order with prefix sums, so the
/// ℓ1-ball threshold for any radius costs one binary search.
#[derive(Debug, Clone)]
pub struct SortedMagnitudes {
    desc: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedMagnitudes {
    pub fn new(values: &[f64]) -> SortedMagnitudes {
        let mut desc: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        desc.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut prefix = Vec::with_capacity(desc.len());
        let mut acc = 0.0;
        for &v in &desc {
            acc += v;
            prefix.push(acc);
        }
        SortedMagnitudes { desc, prefix }
    }

    pub fn total(&self) -> f64 {
        self.prefix.last().copied().unwrap_or(0.0)
    }

    /// θ ≥ 0 with `Σ max(a_i − θ, 0) = radius`, or 0 if the radius is not binding.
    pub fn threshold(&self, radius: f64) -> f64 {
        if self.total() <= radius {
            return 0.0;
        }
        if radius <= 0.0 {
            return self.desc[0];
        }
        // Largest j (1-based) with a_(j) > (S_j − radius)/j; the predicate holds
        // on a prefix of 1..=n.
        let holds = |j: usize| self.desc[j - 1] * j as f64 > self.prefix[j - 1] - radius;
        let (mut lo, mut hi) = (1usize, self.desc.len());
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if holds(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        ((self.prefix[lo - 1] - radius) / lo as f64).max(0.0)
    }
}

/// Scale factor `max(a − θ, 0)/a` (0 for a = 0).
#[inline]
fn shrink_factor(a: f64, theta: f64) -> f64 {
    if a > theta {
        (a - theta) / a
    } else {
        0.0
    }
}

fn scale_columns(x: &Mat, factors: &[f64]) -> Mat {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, f) in out.row_mut(i).iter_mut().zip(factors) {
            *v *= f;
        }
    }
    out
}

fn scale_rows(x: &Mat, factors: &[f64]) -> Mat {
    let mut out = x.clone();
    for (i, &f) in factors.iter().enumerate() {
        for v in out.row_mut(i) {
            *v *= f;
        }
    }
    out
}

/// `argmin_z ½‖z − x‖² + τ‖z‖`.
pub fn prox(kind: NormKind, x: &Mat, tau: f64) -> Mat {
    match kind {
        NormKind::L1 => x.map(|v| v.signum() * (v.abs() - tau).max(0.0)),
        NormKind::L12Cols => {
            let f: Vec<f64> = x.column_norms().iter().map(|&c| shrink_factor(c, tau)).collect();
            scale_columns(x, &f)
        }
        NormKind::L12Rows => {
            let f: Vec<f64> = x.row_norms().iter().map(|&c| shrink_factor(c, tau)).collect();
            scale_rows(x, &f)
        }
        NormKind::Nuclear => {
            let r = svd(x).expect("finite input");
            let s: Vec<f64> = r.s.iter().map(|&s| (s - tau).max(0.0)).collect();
            r.recompose(&s)
        }
    }
}

/// Euclidean projection onto `{z : ‖z‖ ≤ radius}`.
pub fn ball_project(kind: NormKind, x: &Mat, radius: f64) -> Mat {
    match kind {
        NormKind::L1 => {
            let theta = SortedMagnitudes::new(x.as_slice()).threshold(radius);
            if theta == 0.0 {
                return x.clone();
            }
            x.map(|v| v.signum() * (v.abs() - theta).max(0.0))
        }
        NormKind::L12Cols => {
            let c = x.column_norms();
            let theta = SortedMagnitudes::new(&c).threshold(radius);
            if theta == 0.0 {
                return x.clone();
            }
            let f: Vec<f64> = c.iter().map(|&a| shrink_factor(a, theta)).collect();
            scale_columns(x, &f)
        }
        NormKind::L12Rows => ball_project(NormKind::L12Cols, &x.transpose(), radius).transpose(),
        NormKind::Nuclear => {
            let r = svd(x).expect("finite input");
            let theta = SortedMagnitudes::new(&r.s).threshold(radius);
            if theta == 0.0 {
                return x.clone();
            }
            let s: Vec<f64> = r.s.iter().map(|&s| (s - theta).max(0.0)).collect();
            r.recompose(&s)
        }
    }
}

/// Euclidean projection onto the dual-norm ball `{z : ‖z‖* ≤ radius}`.
pub fn dual_ball_project(kind: NormKind, x: &Mat, radius: f64) -> Mat {
    let clamp = |a: f64| if a > radius { radius / a } else { 1.0 };
    match kind {
        NormKind::L1 => x.map(|v| v.clamp(-radius, radius)),
        NormKind::L12Cols => {
            let f: Vec<f64> = x.column_norms().into_iter().map(clamp).collect();
            scale_columns(x, &f)
        }
        NormKind::L12Rows => {
            let f: Vec<f64> = x.row_norms().into_iter().map(clamp).collect();
            scale_rows(x, &f)
        }
        NormKind::Nuclear => {
            let r = svd(x).expect("finite input");
            let s: Vec<f64> = r.s.iter().map(|&s| s.min(radius)).collect();
            r.recompose(&s)
        }
    }
}

/// The support subspace `T` of a decomposable norm at a point.
#[derive(Debug, Clone)]
pub enum Support {
    /// Flat (row-major) indices of the nonzero entries.
    Entries(Vec<usize>),
    Columns(Vec<usize>),
    Rows(Vec<usize>),
    /// `T = { U A^T + B V^T }` for orthonormal `U` (d1 x r) and `V` (d2 x r).
    Subspaces {
        u: Mat,
        v: Mat,
    },
}

#[derive(Debug, Clone)]
pub struct SignedSupport {
    pub kind: NormKind,
    /// The sign matrix `e`.
    pub sign: Mat,
    pub support: Support,
}

impl SignedSupport {
    pub fn shape(&self) -> (usize, usize) {
        self.sign.shape()
    }

    /// Size of the support: nonzeros, nonzero columns/rows, or rank.
    pub fn size(&self) -> usize {
        match &self.support {
            Support::Entries(idx) => idx.len(),
            Support::Columns(idx) | Support::Rows(idx) => idx.len(),
            Support::Subspaces { u, .. } => u.cols(),
        }
    }

    pub fn project_t(&self, z: &Mat) -> Mat {
        let (d1, d2) = self.shape();
        match &self.support {
            Support::Entries(idx) => {
                let mut out = Mat::zeros(d1, d2);
                for &i in idx {
                    out.as_mut_slice()[i] = z.as_slice()[i];
                }
                out
            }
            Support::Columns(idx) => {
                let mut out = Mat::zeros(d1, d2);
                for &j in idx {
                    out.set_col(j, &z.col(j));
                }
                out
            }
            Support::Rows(idx) => {
                let mut out = Mat::zeros(d1, d2);
                for &i in idx {
                    out.row_mut(i).copy_from_slice(z.row(i));
                }
                out
            }
            Support::Subspaces { .. } => z - &self.project_t_perp(z),
        }
    }

    pub fn project_t_perp(&self, z: &Mat) -> Mat {
        match &self.support {
            Support::Subspaces { u, v } => {
                // (I − UU^T) Z (I − VV^T)
                let left = z - &u.matmul(&u.tmatmul(z));
                &left - &left.matmul(v).matmul_t(v)
            }
            _ => z - &self.project_t(z),
        }
    }

    /// `sup { ‖w‖_F² : w ∈ T⊥, ‖w‖* ≤ 1 }`, attained at dual-ball extreme points.
    pub fn off_support_capacity(&self) -> f64 {
        let (d1, d2) = self.shape();
        let total = match self.kind {
            NormKind::L1 => d1 * d2,
            NormKind::L12Cols => d2,
            NormKind::L12Rows => d1,
            NormKind::Nuclear => d1.min(d2),
        };
        (total - self.size()) as f64
    }

    /// Random `w ∈ T⊥` with `‖w‖* = 1`: half the time a dual-ball extreme point
    /// (the directions that realize suprema), otherwise a normalized Gaussian.
    pub fn random_off_support_direction(&self, rng: &mut Rng) -> Mat {
        let (d1, d2) = self.shape();
        let extreme = rng.uniform() < 0.5;
        let g = crate::matcore::gaussian(rng, d1, d2);
        let w = self.project_t_perp(&g);
        if self.off_support_capacity() == 0.0 {
            return Mat::zeros(d1, d2);
        }
        match self.kind {
            NormKind::L1 => {
                if extreme {
                    w.map(|v| if v == 0.0 { 0.0 } else { v.signum() })
                } else {
                    let m = w.max_abs();
                    w.scale(1.0 / m)
                }
            }
            NormKind::L12Cols | NormKind::L12Rows => {
                let cols = self.kind == NormKind::L12Cols;
                let norms = if cols { w.column_norms() } else { w.row_norms() };
                let f: Vec<f64> = if extreme {
                    norms.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect()
                } else {
                    let m = norms.iter().copied().fold(0.0, f64::max);
                    vec![1.0 / m; norms.len()]
                };
                if cols {
                    scale_columns(&w, &f)
                } else {
                    scale_rows(&w, &f)
                }
            }
            NormKind::Nuclear => {
                let r = svd(&w).expect("finite");
                let rank = self.off_support_capacity() as usize;
                let s: Vec<f64> = if extreme {
                    r.s.iter()
                        .enumerate()
                        .map(|(i, _)| if i < rank { 1.0 } else { 0.0 })
                        .collect()
                } else {
                    r.s.iter().map(|&s| s / r.s[0]).collect()
                };
                // Re-project: completion vectors of tiny singular values may leak into T.
                self.project_t_perp(&r.recompose(&s))
            }
        }
    }
}

pub fn sign_support(kind: NormKind, x: &Mat) -> Result<SignedSupport> {
    let (d1, d2) = x.shape();
    let scale = x.max_abs();
    if scale == 0.0 {
        return Err(Error::ZeroSignal);
    }
    match kind {
        NormKind::L1 => {
            let tol = SUPPORT_TOL * scale;
            let mut sign = Mat::zeros(d1, d2);
            let mut idx = Vec::new();
            for (i, &v) in x.as_slice().iter().enumerate() {
                if v.abs() > tol {
                    sign.as_mut_slice()[i] = v.signum();
                    idx.push(i);
                }
            }
            Ok(SignedSupport {
                kind,
                sign,
                support: Support::Entries(idx),
            })
        }
        NormKind::L12Cols => {
            let c = x.column_norms();
            let tol = SUPPORT_TOL * c.iter().copied().fold(0.0, f64::max);
            let idx: Vec<usize> = (0..d2).filter(|&j| c[j] > tol).collect();
            let f: Vec<f64> = c.iter().map(|&a| if a > tol { 1.0 / a } else { 0.0 }).collect();
            Ok(SignedSupport {
                kind,
                sign: scale_columns(x, &f),
                support: Support::Columns(idx),
            })
        }
        NormKind::L12Rows => {
            let t = sign_support(NormKind::L12Cols, &x.transpose())?;
            let Support::Columns(idx) = t.support else {
                unreachable!()
            };
            Ok(SignedSupport {
                kind,
                sign: t.sign.transpose(),
                support: Support::Rows(idx),
            })
        }
        NormKind::Nuclear => {
            let r = svd(x)?;
            let rank = r.s.iter().filter(|&&s| s > SUPPORT_TOL * r.s[0]).count();
            let (u, v) = leading_factors(&r, rank);
            Ok(SignedSupport {
                kind,
                sign: u.matmul_t(&v),
                support: Support::Subspaces { u, v },
            })
        }
    }
}

fn leading_factors(r: &SvdResult, rank: usize) -> (Mat, Mat) {
    let d1 = r.u.rows();
    let d2 = r.vt.cols();
    let u = Mat::from_fn(d1, rank, |i, j| r.u[(i, j)]);
    let v = Mat::from_fn(d2, rank, |i, j| r.vt[(j, i)]);
    (u, v)
}

/// A random element of `∂‖x‖`: `e` plus an off-support part whose dual norm
/// is uniform in `[0, 1]`.
pub fn subgrad_sample(kind: NormKind, x: &Mat, rng: &mut Rng) -> Result<Mat> {
    let ss = sign_support(kind, x)?;
    Ok(subgrad_sample_from(&ss, rng))
}

pub fn subgrad_sample_from(ss: &SignedSupport, rng: &mut Rng) -> Mat {
    let w = ss.random_off_support_direction(rng);
    let t = rng.uniform();
    let mut g = ss.sign.clone();
    g.axpy(t, &w);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    pub kind: NormKind,
    /// `‖x/‖x‖_F‖`.
    pub value: f64,
    pub lipschitz: f64,
    pub kappa: f64,
}

pub fn kappa(kind: NormKind, x: &Mat) -> Result<NormProfile> {
    let f = x.frob_norm();
    if f == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let value = eval(kind, &x.scale(1.0 / f));
    let lipschitz = kind.lipschitz(x.rows(), x.cols());
    Ok(NormProfile {
        kind,
        value,
        lipschitz,
        kappa: value / lipschitz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::gaussian;

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    fn sample_mat(rng: &mut Rng, d1: usize, d2: usize) -> Mat {
        gaussian(rng, d1, d2)
    }

    #[test]
    fn eval_examples() {
        let x = Mat::from_rows(&[&[1.0, -2.0], &[0.0, 3.0]]);
        assert_eq!(eval(NormKind::L1, &x), 6.0);
        assert_eq!(dual_eval(NormKind::L1, &x), 3.0);
        assert!((eval(NormKind::Nuclear, &Mat::diag(&[3.0, 1.0])) - 4.0).abs() < 1e-14);
        assert!((dual_eval(NormKind::Nuclear, &Mat::diag(&[3.0, 1.0])) - 3.0).abs() < 1e-14);
        let c = Mat::from_rows(&[&[3.0, 0.0], &[4.0, 0.0]]);
        assert_eq!(eval(NormKind::L12Cols, &c), 5.0);
        assert_eq!(eval(NormKind::L12Rows, &c), 7.0);
        assert_eq!(eval(NormKind::L12Rows, &c), eval(NormKind::L12Cols, &c.transpose()));
    }

    #[test]
    fn dual_norm_is_monte_carlo_supremum() {
        let mut rng = Rng::new(21);
        let x = sample_mat(&mut rng, 5, 5);
        for kind in NormKind::ALL {
            let exact = dual_eval(kind, &x);
            let mut best: f64 = 0.0;
            for _ in 0..10_000 {
                // Random feasible points of the unit ball, drawn near its extreme points.
                let z = match kind {
                    NormKind::L1 => {
                        let mut z = Mat::zeros(5, 5);
                        z.as_mut_slice()[rng.below(25)] = rng.sign();
                        z
                    }
                    NormKind::L12Cols | NormKind::L12Rows => {
                        let xt = if kind == NormKind::L12Cols {
                            x.clone()
                        } else {
                            x.transpose()
                        };
                        let j = rng.below(5);
                        let dir: Vec<f64> = xt.col(j).iter().map(|v| v + 0.3 * rng.normal()).collect();
                        let nrm = crate::matcore::norm2(&dir);
                        let mut z = Mat::zeros(5, 5);
                        z.set_col(j, &dir.iter().map(|v| v / nrm).collect::<Vec<_>>());
                        if kind == NormKind::L12Cols {
                            z
                        } else {
                            z.transpose()
                        }
                    }
                    NormKind::Nuclear => {
                        let u = rng.normal_vec(5);
                        let u: Vec<f64> = u.iter().map(|v| v / crate::matcore::norm2(&u)).collect();
                        let v = x.tmatvec(&u);
                        let v: Vec<f64> = v.iter().map(|a| a / crate::matcore::norm2(&v)).collect();
                        Mat::outer(&u, &v)
                    }
                };
                best = best.max(x.inner(&z));
            }
            assert!(best <= exact * (1.0 + 1e-12), "{kind}: {best} > {exact}");
            assert!(best >= 0.98 * exact, "{kind}: {best} vs {exact}");
        }
    }

    #[test]
    fn prox_examples() {
        let x = Mat::col_vector(&[3.0, -0.5]);
        assert_eq!(prox(NormKind::L1, &x, 1.0), Mat::col_vector(&[2.0, 0.0]));
        let p = prox(NormKind::Nuclear, &Mat::diag(&[3.0, 1.0]), 2.0);
        assert!(close(&p, &Mat::diag(&[1.0, 0.0]), 1e-14));
    }

    #[test]
    fn ball_project_examples() {
        let x = Mat::col_vector(&[1.0, 1.0]);
        assert!(close(
            &ball_project(NormKind::L1, &x, 1.0),
            &Mat::col_vector(&[0.5, 0.5]),
            1e-15
        ));
        let mut rng = Rng::new(3);
        let small = sample_mat(&mut rng, 4, 4).scale(0.01);
        for kind in NormKind::ALL {
            assert_eq!(ball_project(kind, &small, 10.0), small);
        }
    }

    #[test]
    fn threshold_matches_definition() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let n = 1 + rng.below(30);
            let a: Vec<f64> = (0..n).map(|_| rng.normal().abs()).collect();
            let sm = SortedMagnitudes::new(&a);
            let r = rng.uniform() * sm.total() * 1.2;
            let theta = sm.threshold(r);
            let mass: f64 = a.iter().map(|&v| (v - theta).max(0.0)).sum();
            if sm.total() <= r {
                assert_eq!(theta, 0.0);
            } else {
                assert!((mass - r).abs() < 1e-10 * sm.total().max(1.0), "{mass} vs {r}");
            }
        }
    }

    #[test]
    fn sign_support_examples() {
        let x = Mat::col_vector(&[2.0, 0.0, -3.0]);
        let s = sign_support(NormKind::L1, &x).unwrap();
        assert_eq!(s.sign, Mat::col_vector(&[1.0, 0.0, -1.0]));
        assert!(matches!(&s.support, Support::Entries(i) if i == &vec![0, 2]));

        let s = sign_support(NormKind::Nuclear, &Mat::diag(&[3.0, 1.0])).unwrap();
        assert!(close(&s.sign, &Mat::identity(2), 1e-14));

        let c = Mat::from_rows(&[&[3.0, 0.0], &[4.0, 0.0]]);
        let s = sign_support(NormKind::L12Cols, &c).unwrap();
        assert!(close(&s.sign, &Mat::from_rows(&[&[0.6, 0.0], &[0.8, 0.0]]), 1e-15));

        assert_eq!(
            sign_support(NormKind::L1, &Mat::zeros(2, 2)).unwrap_err(),
            Error::ZeroSignal
        );
    }

    #[test]
    fn sign_vector_energy_equals_support_size() {
        let mut rng = Rng::new(5);
        let mut x = Mat::zeros(6, 7);
        let g = gaussian(&mut rng, 3, 2).matmul(&gaussian(&mut rng, 2, 4));
        x.set_block(1, 2, &g);
        let expect = [
            (NormKind::L1, 12.0),
            (NormKind::L12Cols, 4.0),
            (NormKind::L12Rows, 3.0),
            (NormKind::Nuclear, 2.0),
        ];
        for (kind, k) in expect {
            let s = sign_support(kind, &x).unwrap();
            assert!((s.sign.frob_norm_sq() - k).abs() < 1e-10, "{kind}");
            assert!(close(&s.project_t(&s.sign), &s.sign, 1e-10));
        }
    }

    #[test]
    fn subgradient_samples() {
        let mut rng = Rng::new(6);
        let one = Mat::col_vector(&[1.0]);
        for _ in 0..10 {
            assert_eq!(subgrad_sample(NormKind::L1, &one, &mut rng).unwrap(), one);
        }
        let x = Mat::col_vector(&[1.0, 0.0]);
        for _ in 0..50 {
            let g = subgrad_sample(NormKind::L1, &x, &mut rng).unwrap();
            assert_eq!(g[(0, 0)], 1.0);
            assert!(g[(1, 0)].abs() <= 1.0);
        }
        let mut x = Mat::zeros(5, 6);
        x.set_block(0, 0, &gaussian(&mut rng, 2, 3));
        for kind in NormKind::ALL {
            let ss = sign_support(kind, &x).unwrap();
            for _ in 0..50 {
                let g = subgrad_sample(kind, &x, &mut rng).unwrap();
                assert!((x.inner(&g) - eval(kind, &x)).abs() <= 1e-8 * eval(kind, &x));
                let off = ss.project_t_perp(&g);
                assert!(dual_eval(kind, &off) <= 1.0 + 1e-10);
            }
        }
    }

    #[test]
    fn kappa_closed_forms() {
        let n = 50;
        let mut v = vec![0.0; n];
        for (i, s) in [1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0].iter().enumerate() {
            v[3 * i] = *s;
        }
        let p = kappa(NormKind::L1, &Mat::col_vector(&v)).unwrap();
        assert!((p.kappa * p.kappa - 7.0 / 50.0).abs() < 1e-12);

        let mut rng = Rng::new(8);
        let d = 10;
        let q = svd(&gaussian(&mut rng, d, d)).unwrap();
        let r = 3;
        let x = Mat::from_fn(d, r, |i, j| q.u[(i, j)]).matmul_t(&Mat::from_fn(d, r, |i, j| q.vt[(j, i)]));
        let p = kappa(NormKind::Nuclear, &x).unwrap();
        assert!((p.kappa * p.kappa - r as f64 / d as f64).abs() < 1e-12);
    }

    #[test]
    fn kappa_at_most_one() {
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let x = gaussian(&mut rng, 4, 7);
            for kind in NormKind::ALL {
                assert!(kappa(kind, &x).unwrap().kappa <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn prox_optimality_on_random_input() {
        let mut rng = Rng::new(10);
        let tau = 0.7;
        for kind in NormKind::ALL {
            let x = gaussian(&mut rng, 6, 6);
            let z = prox(kind, &x, tau);
            // (x − z)/τ ∈ ∂‖z‖: support part equals e, off-support dual norm ≤ 1.
            let g = (&x - &z).scale(1.0 / tau);
            let ss = sign_support(kind, &z).unwrap();
            assert!(close(&ss.project_t(&g), &ss.sign, 1e-8), "{kind}");
            assert!(dual_eval(kind, &ss.project_t_perp(&g)) <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn ball_projection_variational_inequality() {
        let mut rng = Rng::new(11);
        for kind in NormKind::ALL {
            let x = gaussian(&mut rng, 5, 5);
            let y = ball_project(kind, &x, 2.0);
            assert!(eval(kind, &y) <= 2.0 + 1e-9);
            for _ in 0..1000 {
                let z = gaussian(&mut rng, 5, 5);
                let z = z.scale(2.0 * rng.uniform() / eval(kind, &z));
                assert!((&x - &y).inner(&(&z - &y)) <= 1e-7);
            }
        }
    }
}
