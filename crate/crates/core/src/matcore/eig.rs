//! Symmetric eigendecomposition.
//!
//! Two routes with the same contract. [`sym_eig`] is cyclic Jacobi: slow but
//! simple and accurate to the last digits, so it doubles as the reference in
//! tests. The Householder tridiagonalization + implicit QL route (EISPACK
//! `tred2`/`tql2`) is roughly an order of magnitude faster at d ~ 50 and is
//! what the solver hot loops use.

use crate::error::{Error, Result};
use crate::matcore::Mat;

const SYMMETRY_TOL: f64 = 1e-9;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigMethod {
    #[default]
    Jacobi,
    Tridiagonal,
}

/// `a = Q diag(values) Q^T` with `values` nonincreasing and eigenvectors in the
/// columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEig {
    pub fn reconstruct(&self) -> Mat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for (j, &l) in self.values.iter().enumerate() {
                scaled[(i, j)] *= l;
            }
        }
        scaled.matmul_t(&self.vectors)
    }
}

fn check_symmetric(a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.all_finite() {
        return Err(Error::NonFinite);
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition.
pub fn sym_eig(a: &Mat) -> Result<SymEig> {
    sym_eig_with(a, EigMethod::Jacobi)
}

pub fn sym_eig_with(a: &Mat, method: EigMethod) -> Result<SymEig> {
    check_symmetric(a)?;
    let sym = a.symmetrize();
    let (values, vectors) = match method {
        EigMethod::Jacobi => jacobi(sym),
        EigMethod::Tridiagonal => tridiagonal_ql(sym),
    };
    Ok(sorted_descending(values, vectors))
}

fn sorted_descending(values: Vec<f64>, vectors: Mat) -> SymEig {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = Mat::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    SymEig {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

fn jacobi(mut a: Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    let mut v = Mat::identity(n);
    let scale = a.frob_norm();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[(i, i)]).collect();
    (values, v)
}

/// EISPACK tred2 + tql2 on column-major storage (`w[c * n + r]` is `V[r][c]`),
/// so the inner loops over rows are contiguous.
fn tridiagonal_ql(a: Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    if n == 1 {
        return (vec![a[(0, 0)]], Mat::identity(1));
    }
    // `a` is symmetric, so its row-major data is also its column-major data.
    let mut w = a.into_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    macro_rules! v {
        ($r:expr, $c:expr) => {
            w[($c) * n + ($r)]
        };
    }

    // Householder reduction to tridiagonal form.
    for j in 0..n {
        d[j] = v!(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v!(i - 1, j);
                v!(i, j) = 0.0;
                v!(j, i) = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v!(j, i) = f;
                g = e[j] + v!(j, j) * f;
                for k in (j + 1)..i {
                    g += v!(k, j) * d[k];
                    e[k] += v!(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v!(k, j) -= f * e[k] + g * d[k];
                }
                d[j] = v!(i - 1, j);
                v!(i, j) = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..(n - 1) {
        v!(n - 1, i) = v!(i, i);
        v!(i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v!(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v!(k, i + 1) * v!(k, j);
                }
                for k in 0..=i {
                    v!(k, j) -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v!(k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v!(n - 1, j);
        v!(n - 1, j) = 0.0;
    }
    v!(n - 1, n - 1) = 1.0;
    e[0] = 0.0;

    // Implicit QL iterations on the tridiagonal matrix.
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (left, right) = w.split_at_mut((i + 1) * n);
                    let col_i = &mut left[i * n..];
                    let col_i1 = &mut right[..n];
                    for (vi, vi1) in col_i.iter_mut().zip(col_i1.iter_mut()) {
                        let hk = *vi1;
                        *vi1 = s * *vi + c * hk;
                        *vi = c * *vi - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let vectors = Mat::from_fn(n, n, |r, c| w[c * n + r]);
    (d, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{gaussian, Rng};

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = Rng::new(seed);
        gaussian(&mut rng, n, n).symmetrize()
    }

    fn orthogonality_error(q: &Mat) -> f64 {
        let n = q.cols();
        (&q.tmatmul(q) - &Mat::identity(n)).max_abs()
    }

    #[test]
    fn diagonal_input() {
        let r = sym_eig(&Mat::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(r.values, vec![3.0, 1.0]);
        assert_eq!(r.vectors, Mat::identity(2));
        let r = sym_eig(&Mat::diag(&[1.0, 3.0])).unwrap();
        assert_eq!(r.values, vec![3.0, 1.0]);
    }

    #[test]
    fn identity_input() {
        for method in [EigMethod::Jacobi, EigMethod::Tridiagonal] {
            let r = sym_eig_with(&Mat::identity(4), method).unwrap();
            assert_eq!(r.values, vec![1.0; 4]);
        }
    }

    #[test]
    fn random_reconstruction_both_methods() {
        for n in [1, 2, 3, 8, 17, 40] {
            let a = random_symmetric(n, n as u64);
            for method in [EigMethod::Jacobi, EigMethod::Tridiagonal] {
                let r = sym_eig_with(&a, method).unwrap();
                let resid = (&r.reconstruct() - &a).frob_norm();
                assert!(resid <= 1e-8 * a.frob_norm(), "n={n} {method:?}: {resid}");
                assert!(orthogonality_error(&r.vectors) < 1e-10);
                assert!(r.values.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn methods_agree_on_spectrum() {
        let a = random_symmetric(25, 99);
        let j = sym_eig(&a).unwrap();
        let t = sym_eig_with(&a, EigMethod::Tridiagonal).unwrap();
        for (x, y) in j.values.iter().zip(&t.values) {
            assert!((x - y).abs() < 1e-10 * a.frob_norm());
        }
    }

    #[test]
    fn repeated_and_zero_eigenvalues() {
        let u = Mat::col_vector(&[1.0, 2.0, 2.0, 0.0]);
        let a = u.matmul_t(&u);
        for method in [EigMethod::Jacobi, EigMethod::Tridiagonal] {
            let r = sym_eig_with(&a, method).unwrap();
            assert!((r.values[0] - 9.0).abs() < 1e-12);
            assert!(r.values[1..].iter().all(|v| v.abs() < 1e-12));
            assert!(orthogonality_error(&r.vectors) < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(sym_eig(&Mat::zeros(2, 3)), Err(Error::NotSquare { .. })));
        let a = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn ill_conditioned() {
        let mut rng = Rng::new(5);
        let n = 30;
        let g = gaussian(&mut rng, n, n);
        let q = sym_eig(&g.symmetrize()).unwrap().vectors;
        let lambdas: Vec<f64> = (0..n).map(|i| 10f64.powf(-8.0 * i as f64 / (n - 1) as f64)).collect();
        let a = q.matmul(&Mat::diag(&lambdas)).matmul_t(&q).symmetrize();
        for method in [EigMethod::Jacobi, EigMethod::Tridiagonal] {
            let r = sym_eig_with(&a, method).unwrap();
            let resid = (&r.reconstruct() - &a).frob_norm();
            assert!(resid <= 1e-8 * a.frob_norm());
        }
    }
}
