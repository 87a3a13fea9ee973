//! Correlations with subdifferentials, cone projections, Gaussian distances and
//! the sample-complexity bounds built from them.
//!
//! Lower bound: with `κ_i = ‖x̄0‖_(i)/L_i`,
//! `m_low = (1 − D̄(C)) n κ²_min / 100`, and for weighted sums
//! `m_low' = n (1 − D̄(C)) (Σ λ̄_i κ_i)² / 100` with `λ̄_i ∝ λ_i L_i`.
//!
//! Upper bound: `m_up = (Σ λ̄_i D(α_i ∂‖x0‖_(i)))²` with `λ̄_i ∝ λ_i/α_i`;
//! recovery succeeds once `m ≥ (√m_up + t)² + 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{dot, gaussian, svd, sym_eig_with, EigMethod, Mat, Rng};
use crate::norms::{self, NormKind, SignedSupport, Support};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    #[default]
    Full,
    Symmetric,
    Psd,
}

impl ConeKind {
    /// Normalized Gaussian distance `D̄(C) = D(C)/√n` on `d x d` matrices.
    pub fn dbar(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            ConeKind::Full => 0.0,
            ConeKind::Symmetric => (d * (d - 1.0) / (2.0 * d * d)).sqrt(),
            ConeKind::Psd => (0.75 - 0.25 / d).sqrt(),
        }
    }

    pub fn parse(s: &str) -> Option<ConeKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "none" => Some(ConeKind::Full),
            "sym" | "symmetric" => Some(ConeKind::Symmetric),
            "psd" => Some(ConeKind::Psd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    WeightedSum,
    MaxRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: NormKind,
    pub weight: f64,
}

/// `f(x) = Σ λ_i ‖x‖_(i)` or `f(x) = max_i ‖x‖_(i)/‖x0‖_(i)`, over `x ∈ C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub terms: Vec<Term>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub cone: ConeKind,
    /// `‖x0‖_(i)` per term; required for `MaxRatio`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

impl ObjectiveSpec {
    pub fn weighted(terms: &[(NormKind, f64)], cone: ConeKind) -> ObjectiveSpec {
        ObjectiveSpec {
            terms: terms.iter().map(|&(kind, weight)| Term { kind, weight }).collect(),
            mode: Mode::WeightedSum,
            cone,
            reference: None,
        }
    }

    pub fn max_ratio(kinds: &[NormKind], cone: ConeKind) -> ObjectiveSpec {
        ObjectiveSpec {
            terms: kinds.iter().map(|&kind| Term { kind, weight: 1.0 }).collect(),
            mode: Mode::MaxRatio,
            cone,
            reference: None,
        }
    }

    /// Stores `‖x0‖_(i)` as the reference values.
    pub fn with_reference(mut self, x0: &Mat) -> ObjectiveSpec {
        self.reference = Some(self.terms.iter().map(|t| norms::eval(t.kind, x0)).collect());
        self
    }

    pub fn kinds(&self) -> Vec<NormKind> {
        self.terms.iter().map(|t| t.kind).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument("objective has no terms".into()));
        }
        if self.terms.iter().any(|t| !(t.weight >= 0.0) || !t.weight.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        if !self.terms.iter().any(|t| t.weight > 0.0) {
            return Err(Error::InvalidArgument("objective needs a positive weight".into()));
        }
        if let Some(r) = &self.reference {
            if r.len() != self.terms.len() || r.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument(
                    "reference norms must be positive, one per term".into(),
                ));
            }
        }
        Ok(())
    }

    /// Weights of the equivalent linearization used by bound formulas:
    /// `λ_i` for weighted sums, `w_i/‖x0‖_(i)` for max-ratio objectives.
    pub fn effective_weights(&self) -> Vec<f64> {
        match (self.mode, &self.reference) {
            (Mode::MaxRatio, Some(r)) => self.terms.iter().zip(r).map(|(t, r)| t.weight / r).collect(),
            _ => self.terms.iter().map(|t| t.weight).collect(),
        }
    }

    pub fn eval(&self, x: &Mat) -> f64 {
        match self.mode {
            Mode::WeightedSum => self.terms.iter().map(|t| t.weight * norms::eval(t.kind, x)).sum(),
            Mode::MaxRatio => {
                let r = self
                    .reference
                    .as_ref()
                    .expect("max-ratio objective needs reference norms");
                self.terms
                    .iter()
                    .zip(r)
                    .map(|(t, r)| norms::eval(t.kind, x) / r)
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.terms.iter().map(|t| format!("{}:{}", t.kind, t.weight)).collect();
        let mode = match self.mode {
            Mode::WeightedSum => "sum",
            Mode::MaxRatio => "max",
        };
        format!("{mode}[{}]/{:?}", parts.join(","), self.cone)
    }
}

/// `ρ(x, ∂‖x‖) = ‖x̄‖ / sup_{g ∈ ∂‖x‖} ‖g‖_F`, exactly.
pub fn correlation(x: &Mat, kind: NormKind) -> Result<f64> {
    let ss = norms::sign_support(kind, x)?;
    let xbar = x.scale(1.0 / x.frob_norm());
    Ok(norms::eval(kind, &xbar) / sup_subgradient_norm(&ss))
}

/// `sup_{g ∈ ∂} ‖g‖_F = √(‖e‖² + capacity of the off-support dual ball)`.
pub fn sup_subgradient_norm(ss: &SignedSupport) -> f64 {
    (ss.sign.frob_norm_sq() + ss.off_support_capacity()).sqrt()
}

fn check_orthonormal(basis: &[Mat]) -> Result<()> {
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            if (a.inner(b) - target).abs() > 1e-10 {
                return Err(Error::InvalidArgument("basis is not orthonormal".into()));
            }
        }
    }
    Ok(())
}

fn project_onto_span(basis: &[Mat], g: &Mat) -> f64 {
    basis.iter().map(|b| b.inner(g).powi(2)).sum::<f64>().sqrt()
}

/// Sample-minimum estimate of `ρ(R, ∂f(x0)) = inf_{g ∈ ∂f} ‖P_R g‖/‖g‖`.
///
/// Subgradients of `f` combine per-norm subgradients: `Σ λ_i g_i` for weighted
/// sums, `Σ w_i g_i/‖x0‖_(i)` with random nonnegative `w` for max-ratio.
/// The sampled minimum is an upper estimate of the infimum.
pub fn subspace_correlation(
    basis: &[Mat],
    objective: &ObjectiveSpec,
    x0: &Mat,
    samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    check_orthonormal(basis)?;
    objective.validate()?;
    let supports: Vec<SignedSupport> = objective
        .terms
        .iter()
        .map(|t| norms::sign_support(t.kind, x0))
        .collect::<Result<_>>()?;
    let weights = objective.effective_weights();
    let base = rng.split();
    let best = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = Rng::new(base).child(&[s as u64]);
            let mut g = Mat::zeros(x0.rows(), x0.cols());
            let single = objective.mode == Mode::MaxRatio && r.uniform() < 0.5;
            let pick = r.below(supports.len());
            for (i, ss) in supports.iter().enumerate() {
                let w = match objective.mode {
                    Mode::WeightedSum => weights[i],
                    Mode::MaxRatio if single => {
                        if i == pick {
                            weights[i]
                        } else {
                            0.0
                        }
                    }
                    Mode::MaxRatio => weights[i] * r.uniform(),
                };
                let gi = norms::subgrad_sample_from(ss, &mut r);
                if w > 0.0 {
                    g.axpy(w, &gi);
                }
            }
            let nrm = g.frob_norm();
            if nrm == 0.0 {
                f64::INFINITY
            } else {
                project_onto_span(basis, &g) / nrm
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

fn require_square(x: &Mat) -> Result<()> {
    if x.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: x.rows(),
            cols: x.cols(),
        })
    }
}

pub fn cone_project(cone: ConeKind, x: &Mat) -> Result<Mat> {
    match cone {
        ConeKind::Full => Ok(x.clone()),
        ConeKind::Symmetric => {
            require_square(x)?;
            Ok(x.symmetrize())
        }
        ConeKind::Psd => {
            require_square(x)?;
            Ok(psd_project(&x.symmetrize()))
        }
    }
}

/// `x − P_C(x)`.
pub fn polar_project(cone: ConeKind, x: &Mat) -> Result<Mat> {
    Ok(x - &cone_project(cone, x)?)
}

/// PSD projection of a symmetric matrix: clamp negative eigenvalues.
pub fn psd_project(s: &Mat) -> Mat {
    let n = s.rows();
    let eig = sym_eig_with(s, EigMethod::Tridiagonal).expect("symmetric input");
    let keep: Vec<usize> = (0..n).filter(|&i| eig.values[i] > 0.0).collect();
    if keep.len() == n {
        return s.clone();
    }
    // Σ_{λ_i>0} λ_i q_i q_i^T, built from the (usually fewer) positive pairs.
    let mut scaled = Mat::zeros(n, keep.len());
    let mut q = Mat::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        for r in 0..n {
            q[(r, c)] = eig.vectors[(r, i)];
            scaled[(r, c)] = eig.vectors[(r, i)] * eig.values[i];
        }
    }
    scaled.matmul_t(&q).symmetrize()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDistance {
    pub mean: f64,
    pub stderr: f64,
    /// `mean/√n`.
    pub normalized: f64,
    pub samples: usize,
}

fn summarize(values: &[f64], n: usize) -> GaussianDistance {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    GaussianDistance {
        mean,
        stderr: (var / k).sqrt(),
        normalized: mean / (n as f64).sqrt(),
        samples: values.len(),
    }
}

/// Monte Carlo `D(M) = E ‖h − P_M(h)‖` for `h` standard Gaussian on `d1 x d2`.
pub fn gaussian_distance(
    set_projector: &(dyn Fn(&Mat) -> Mat + Sync),
    d1: usize,
    d2: usize,
    samples: usize,
    rng: &mut Rng,
) -> Result<GaussianDistance> {
    if samples < 100 {
        return Err(Error::InvalidArgument(
            "gaussian_distance needs at least 100 samples".into(),
        ));
    }
    let base = rng.split();
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = Rng::new(base).child(&[s as u64]);
            let h = gaussian(&mut r, d1, d2);
            (&h - &set_projector(&h)).frob_norm()
        })
        .collect();
    Ok(summarize(&values, d1 * d2))
}

/// Squared distance from `h` to `α ∂‖x0‖`, using the decomposition
/// `‖P_T h − α e‖² + dist(P_T⊥ h, α·dual ball)²`.
pub fn dilated_distance_sq(ss: &SignedSupport, h: &Mat, alpha: f64) -> f64 {
    let excess = |a: f64| (a - alpha).max(0.0).powi(2);
    match &ss.support {
        Support::Entries(idx) => {
            let mut on = vec![false; h.len()];
            for &i in idx {
                on[i] = true;
            }
            let hs = h.as_slice();
            let es = ss.sign.as_slice();
            let mut total = 0.0;
            for i in 0..hs.len() {
                total += if on[i] {
                    (hs[i] - alpha * es[i]).powi(2)
                } else {
                    excess(hs[i].abs())
                };
            }
            total
        }
        Support::Columns(idx) | Support::Rows(idx) => {
            let cols = matches!(ss.support, Support::Columns(_));
            let norms = if cols { h.column_norms() } else { h.row_norms() };
            let mut on = vec![false; norms.len()];
            for &i in idx {
                on[i] = true;
            }
            let mut total = 0.0;
            for (i, &nrm) in norms.iter().enumerate() {
                if on[i] {
                    let (hv, ev) = if cols {
                        (h.col(i), ss.sign.col(i))
                    } else {
                        (h.row(i).to_vec(), ss.sign.row(i).to_vec())
                    };
                    total += hv.iter().zip(&ev).map(|(a, b)| (a - alpha * b).powi(2)).sum::<f64>();
                } else {
                    total += excess(nrm);
                }
            }
            total
        }
        Support::Subspaces { .. } => {
            let off = ss.project_t_perp(h);
            let on = h - &off;
            let mut part = on;
            part.axpy(-alpha, &ss.sign);
            let s = svd(&off).expect("finite").s;
            part.frob_norm_sq() + s.iter().map(|&v| excess(v)).sum::<f64>()
        }
    }
}

/// Monte Carlo `D(α ∂‖x0‖) = E min_{g ∈ ∂‖x0‖} ‖h − α g‖`.
pub fn dilated_subdiff_distance(
    kind: NormKind,
    x0: &Mat,
    alpha: f64,
    samples: usize,
    rng: &mut Rng,
) -> Result<GaussianDistance> {
    let ss = norms::sign_support(kind, x0)?;
    let base = rng.split();
    Ok(dilated_distance_with(&ss, alpha, samples, base))
}

fn dilated_distance_with(ss: &SignedSupport, alpha: f64, samples: usize, base: u64) -> GaussianDistance {
    let (d1, d2) = ss.shape();
    let values: Vec<f64> = (0..samples.max(2))
        .into_par_iter()
        .map(|s| {
            let mut r = Rng::new(base).child(&[s as u64]);
            let h = gaussian(&mut r, d1, d2);
            dilated_distance_sq(ss, &h, alpha).sqrt()
        })
        .collect();
    summarize(&values, d1 * d2)
}

/// Per-norm entries of a [`BoundReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBound {
    pub kind: NormKind,
    pub kappa: f64,
    pub lipschitz: f64,
    /// `λ̄_i` of the lower bound (`∝ λ_i L_i`).
    pub lambda_bar_low: f64,
    /// `λ̄_i` of the upper bound (`∝ λ_i/α_i`).
    pub lambda_bar_up: Option<f64>,
    pub alpha: Option<f64>,
    /// `D(α_i ∂‖x0‖_(i))`.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub kappa_min: f64,
    pub dbar_cone: f64,
    pub m_low: f64,
    /// `(1 − D̄) n κ²_min`, the lower bound without the constant 100.
    pub m_low_unscaled: f64,
    pub m_low_weighted: f64,
    pub m_up: Option<f64>,
    /// The sparse-plus-low-rank closed form, when the objective is ℓ1 + nuclear.
    pub m_up_closed_form: Option<f64>,
    pub terms: Vec<NormBound>,
}

impl BoundReport {
    /// `(√m_up + t)² + 1`: measurements sufficient for success.
    pub fn sufficient_m(&self, t: f64) -> Option<f64> {
        self.m_up.map(|m| (m.sqrt() + t).powi(2) + 1.0)
    }
}

fn cone_dbar(cone: ConeKind, x0: &Mat) -> Result<f64> {
    match cone {
        ConeKind::Full => Ok(0.0),
        _ => {
            require_square(x0)?;
            Ok(cone.dbar(x0.rows()))
        }
    }
}

pub fn lower_bound(x0: &Mat, objective: &ObjectiveSpec) -> Result<BoundReport> {
    objective.validate()?;
    let (d1, d2) = x0.shape();
    let n = d1 * d2;
    let dbar = cone_dbar(objective.cone, x0)?;
    let profiles: Vec<norms::NormProfile> = objective
        .terms
        .iter()
        .map(|t| norms::kappa(t.kind, x0))
        .collect::<Result<_>>()?;
    let kappa_min = profiles.iter().map(|p| p.kappa).fold(f64::INFINITY, f64::min);
    let weights = objective.effective_weights();
    let denom: f64 = weights.iter().zip(&profiles).map(|(w, p)| w * p.lipschitz).sum();
    let lambda_bar: Vec<f64> = weights
        .iter()
        .zip(&profiles)
        .map(|(w, p)| w * p.lipschitz / denom)
        .collect();
    let mix: f64 = lambda_bar.iter().zip(&profiles).map(|(l, p)| l * p.kappa).sum();
    let nf = n as f64;
    let terms = profiles
        .iter()
        .zip(&lambda_bar)
        .map(|(p, &l)| NormBound {
            kind: p.kind,
            kappa: p.kappa,
            lipschitz: p.lipschitz,
            lambda_bar_low: l,
            lambda_bar_up: None,
            alpha: None,
            distance: None,
        })
        .collect();
    Ok(BoundReport {
        n,
        kappa_min,
        dbar_cone: dbar,
        m_low: (1.0 - dbar) * nf * kappa_min * kappa_min / 100.0,
        m_low_unscaled: (1.0 - dbar) * nf * kappa_min * kappa_min,
        m_low_weighted: nf * (1.0 - dbar) * mix * mix / 100.0,
        m_up: None,
        m_up_closed_form: None,
        terms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaChoice {
    /// Closed-form dilations: `√(2 log(n/k))` for ℓ1, `√d1 + √d2` for nuclear,
    /// `√d1 + √(2 log(d2/k))` for column ℓ1,2 (rows analogous).
    #[default]
    Recipe,
    /// 30 log-spaced points in `[recipe/4, 4·recipe]` minimizing the distance.
    GridSearch,
    Given(Vec<f64>),
}

/// Nonzero rows and columns of `x` at the support tolerance.
pub fn support_rectangle(x: &Mat) -> (Vec<usize>, Vec<usize>) {
    let tol = norms::SUPPORT_TOL * x.max_abs();
    let rows = (0..x.rows())
        .filter(|&i| x.row(i).iter().any(|v| v.abs() > tol))
        .collect();
    let cols = (0..x.cols())
        .filter(|&j| (0..x.rows()).any(|i| x[(i, j)].abs() > tol))
        .collect();
    (rows, cols)
}

pub fn recipe_alpha(ss: &SignedSupport) -> f64 {
    let (d1, d2) = ss.shape();
    let k = ss.size().max(1) as f64;
    let a = match ss.kind {
        NormKind::L1 => (2.0 * ((d1 * d2) as f64 / k).ln()).sqrt(),
        NormKind::L12Cols => (d1 as f64).sqrt() + (2.0 * (d2 as f64 / k).ln()).sqrt(),
        NormKind::L12Rows => (d2 as f64).sqrt() + (2.0 * (d1 as f64 / k).ln()).sqrt(),
        NormKind::Nuclear => (d1 as f64).sqrt() + (d2 as f64).sqrt(),
    };
    a.max(0.1)
}

pub fn upper_bound(
    x0: &Mat,
    objective: &ObjectiveSpec,
    alphas: &AlphaChoice,
    samples: usize,
    rng: &mut Rng,
) -> Result<BoundReport> {
    objective.validate()?;
    if objective.mode == Mode::MaxRatio && objective.reference.is_none() {
        return Err(Error::InvalidArgument(
            "max-ratio objective needs reference norms".into(),
        ));
    }
    let mut report = lower_bound(x0, objective)?;
    let weights = objective.effective_weights();
    let supports: Vec<SignedSupport> = objective
        .terms
        .iter()
        .map(|t| norms::sign_support(t.kind, x0))
        .collect::<Result<_>>()?;
    if let AlphaChoice::Given(a) = alphas {
        if a.len() != supports.len() || a.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("need one positive alpha per term".into()));
        }
    }
    let base = rng.split();
    let mut chosen = Vec::with_capacity(supports.len());
    for (i, ss) in supports.iter().enumerate() {
        let seed = crate::matcore::derive_seed(base, &[i as u64]);
        let alpha = match alphas {
            AlphaChoice::Recipe => recipe_alpha(ss),
            AlphaChoice::Given(a) => a[i],
            AlphaChoice::GridSearch => {
                let center = recipe_alpha(ss);
                let coarse = (samples / 4).max(100);
                (0..30)
                    .map(|j| center * 4f64.powf(-1.0 + 2.0 * j as f64 / 29.0))
                    .map(|a| (a, dilated_distance_with(ss, a, coarse, seed ^ 0x5eed).mean))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(a, _)| a)
                    .unwrap_or(center)
            }
        };
        let dist = dilated_distance_with(ss, alpha, samples, seed).mean;
        chosen.push((alpha, dist));
    }
    let denom: f64 = weights.iter().zip(&chosen).map(|(w, (a, _))| w / a).sum();
    let mut root = 0.0;
    for (i, (alpha, dist)) in chosen.iter().enumerate() {
        let lb = weights[i] / alpha / denom;
        root += lb * dist;
        let t = &mut report.terms[i];
        t.alpha = Some(*alpha);
        t.distance = Some(*dist);
        t.lambda_bar_up = Some(lb);
    }
    report.m_up = Some(root * root);
    report.m_up_closed_form = sl_closed_form(x0, objective);
    Ok(report)
}

/// `(λ̄_1 · 2k√(log(ed/k)) + λ̄_⋆ · √(6dr + 2d))²` for ℓ1 + nuclear on a square
/// `x0` with `k x k` support and rank `r`, using `α_1 = √(4 log(d/k))`, `α_⋆ = 2√d`.
pub fn sl_closed_form(x0: &Mat, objective: &ObjectiveSpec) -> Option<f64> {
    if !x0.is_square() || objective.terms.len() != 2 {
        return None;
    }
    let kinds = objective.kinds();
    let i1 = kinds.iter().position(|&k| k == NormKind::L1)?;
    let i2 = kinds.iter().position(|&k| k == NormKind::Nuclear)?;
    let d = x0.rows() as f64;
    let (rows, cols) = support_rectangle(x0);
    let k = rows.len().max(cols.len()) as f64;
    if k >= d {
        return None;
    }
    let r = svd(x0).ok()?.rank as f64;
    let w = objective.effective_weights();
    let a1 = (4.0 * (d / k).ln()).sqrt();
    let a2 = 2.0 * d.sqrt();
    let denom = w[i1] / a1 + w[i2] / a2;
    let l1 = w[i1] / a1 / denom;
    let l2 = w[i2] / a2 / denom;
    let root = l1 * 2.0 * k * (1.0 + (d / k).ln()).sqrt() + l2 * (6.0 * d * r + 2.0 * d).sqrt();
    Some(root * root)
}

/// `‖P_R(g)‖` for an orthonormal basis, exposed for certificate code.
pub fn span_norm(basis: &[Mat], g: &Mat) -> f64 {
    project_onto_span(basis, g)
}

/// Numerical check that every basis element lies in `T` of `ss`.
pub fn basis_in_support(basis: &[Mat], ss: &SignedSupport, tol: f64) -> bool {
    basis
        .iter()
        .all(|b| (&ss.project_t(b) - b).frob_norm() <= tol * b.frob_norm().max(1.0))
}

/// Gram matrix of `P_R(e_i)` across terms.
pub fn projected_sign_gram(basis: &[Mat], signs: &[Mat]) -> Vec<Vec<f64>> {
    let coords: Vec<Vec<f64>> = signs
        .iter()
        .map(|e| basis.iter().map(|b| b.inner(e)).collect())
        .collect();
    coords
        .iter()
        .map(|a| coords.iter().map(|b| dot(a, b)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse_signs(n: usize, k: usize, rng: &mut Rng) -> Mat {
        let mut v = vec![0.0; n];
        for i in rng.subset(n, k) {
            v[i] = rng.sign();
        }
        Mat::col_vector(&v)
    }

    #[test]
    fn correlation_examples() {
        let x = Mat::col_vector(&[1.0, 0.0]);
        assert!((correlation(&x, NormKind::L1).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let dense = Mat::col_vector(&[1.0, -1.0, 1.0, 1.0]);
        assert!((correlation(&dense, NormKind::L1).unwrap() - 1.0).abs() < 1e-15);
        // Direct minimization over g = (1, t), |t| ≤ 1.
        let direct = (0..=1000)
            .map(|i| {
                let t = -1.0 + 2.0 * i as f64 / 1000.0;
                1.0 / (1.0 + t * t).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((direct - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn correlation_dominates_kappa() {
        let mut rng = Rng::new(1);
        for _ in 0..20 {
            let mut x = Mat::zeros(6, 6);
            x.set_block(0, 0, &gaussian(&mut rng, 3, 2).matmul(&gaussian(&mut rng, 2, 3)));
            for kind in NormKind::ALL {
                let rho = correlation(&x, kind).unwrap();
                let k = norms::kappa(kind, &x).unwrap().kappa;
                assert!(rho >= k - 1e-12, "{kind}: {rho} < {k}");
            }
        }
    }

    #[test]
    fn subspace_correlation_matches_closed_forms() {
        let mut rng = Rng::new(2);
        let n = 12;
        let x0 = sparse_signs(n, 3, &mut rng).scale(2.0);
        let obj = ObjectiveSpec::weighted(&[(NormKind::L1, 1.0)], ConeKind::Full);
        let xbar = x0.scale(1.0 / x0.frob_norm());
        let est = subspace_correlation(&[xbar], &obj, &x0, 10_000, &mut rng).unwrap();
        let exact = correlation(&x0, NormKind::L1).unwrap();
        assert!((est - exact).abs() <= 0.05 * exact, "{est} vs {exact}");

        let e = norms::sign_support(NormKind::L1, &x0).unwrap().sign;
        let ebar = e.scale(1.0 / e.frob_norm());
        let est = subspace_correlation(&[ebar], &obj, &x0, 10_000, &mut rng).unwrap();
        let target = (3.0f64 / n as f64).sqrt();
        assert!((est - target).abs() <= 0.05 * target, "{est} vs {target}");

        let full: Vec<Mat> = (0..n)
            .map(|i| {
                let mut b = Mat::zeros(n, 1);
                b[(i, 0)] = 1.0;
                b
            })
            .collect();
        let est = subspace_correlation(&full, &obj, &x0, 200, &mut rng).unwrap();
        assert!((est - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_direction_beats_other_directions() {
        let mut rng = Rng::new(3);
        let mut x0 = Mat::zeros(5, 5);
        x0.set_block(0, 0, &gaussian(&mut rng, 3, 1).matmul(&gaussian(&mut rng, 1, 3)));
        for kind in [NormKind::L1, NormKind::Nuclear, NormKind::L12Cols] {
            let obj = ObjectiveSpec::weighted(&[(kind, 1.0)], ConeKind::Full);
            let e = norms::sign_support(kind, &x0).unwrap().sign;
            let rho_e = correlation(&e, kind).unwrap();
            for _ in 0..5 {
                let v = gaussian(&mut rng, 5, 5);
                let v = v.scale(1.0 / v.frob_norm());
                let est = subspace_correlation(&[v], &obj, &x0, 400, &mut rng).unwrap();
                assert!(est <= rho_e + 0.02, "{kind}: {est} > {rho_e}");
            }
        }
    }

    #[test]
    fn cone_projection_examples() {
        let p = cone_project(ConeKind::Psd, &Mat::diag(&[2.0, -3.0])).unwrap();
        assert!((&p - &Mat::diag(&[2.0, 0.0])).max_abs() < 1e-14);
        assert!(matches!(
            cone_project(ConeKind::Psd, &Mat::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let x = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert_eq!(cone_project(ConeKind::Symmetric, &x).unwrap(), x.symmetrize());
        assert_eq!(cone_project(ConeKind::Full, &x).unwrap(), x);
    }

    #[test]
    fn moreau_and_nonexpansive() {
        let mut rng = Rng::new(4);
        for cone in [ConeKind::Full, ConeKind::Symmetric, ConeKind::Psd] {
            for _ in 0..100 {
                let x = gaussian(&mut rng, 7, 7).symmetrize();
                let p = cone_project(cone, &x).unwrap();
                let q = polar_project(cone, &x).unwrap();
                assert!(p.inner(&q).abs() <= 1e-8);
                assert!((&(&p + &q) - &x).max_abs() < 1e-12);
                let y = gaussian(&mut rng, 7, 7);
                let py = cone_project(cone, &y).unwrap();
                let px = cone_project(cone, &x).unwrap();
                assert!((&px - &py).frob_norm() <= (&x - &y).frob_norm() + 1e-12);
            }
        }
    }

    #[test]
    fn psd_projection_idempotent() {
        let mut rng = Rng::new(5);
        let x = gaussian(&mut rng, 9, 9);
        let p = cone_project(ConeKind::Psd, &x).unwrap();
        let pp = cone_project(ConeKind::Psd, &p).unwrap();
        assert!((&p - &pp).max_abs() < 1e-10);
        let eig = crate::matcore::sym_eig(&p).unwrap();
        assert!(*eig.values.last().unwrap() >= -1e-9);
    }

    #[test]
    fn gaussian_distance_to_origin() {
        let mut rng = Rng::new(6);
        let zero = |h: &Mat| Mat::zeros(h.rows(), h.cols());
        let d = gaussian_distance(&zero, 10, 10, 4000, &mut rng).unwrap();
        assert!((d.mean - 9.975).abs() <= 0.02 * 9.975, "{}", d.mean);
        assert!(gaussian_distance(&zero, 2, 2, 50, &mut rng).is_err());
    }

    #[test]
    fn gaussian_distance_to_subspace() {
        // Subspace of matrices supported on the first 3 columns: p = 30 of n = 80.
        let mut rng = Rng::new(7);
        let proj = |h: &Mat| Mat::from_fn(h.rows(), h.cols(), |i, j| if j < 3 { h[(i, j)] } else { 0.0 });
        let d = gaussian_distance(&proj, 10, 8, 2000, &mut rng).unwrap();
        assert!((d.mean * d.mean - 50.0).abs() <= 0.05 * 50.0, "{}", d.mean);
    }

    #[test]
    fn dilated_distance_recipes() {
        let mut rng = Rng::new(8);
        let n = 200;
        let k = 5;
        let x0 = sparse_signs(n, k, &mut rng);
        let alpha = (2.0 * (n as f64 / k as f64).ln()).sqrt();
        let d = dilated_subdiff_distance(NormKind::L1, &x0, alpha, 2000, &mut rng).unwrap();
        let bound = 2.0 * k as f64 * (std::f64::consts::E * n as f64 / k as f64).ln();
        assert!(d.mean * d.mean <= bound + 3.0 * d.stderr * 2.0 * d.mean);

        let dd = 12;
        let u = rng.normal_vec(dd);
        let x0 = Mat::outer(&u, &u);
        let alpha = 2.0 * (dd as f64).sqrt();
        let d = dilated_subdiff_distance(NormKind::Nuclear, &x0, alpha, 500, &mut rng).unwrap();
        assert!(d.mean * d.mean <= 6.0 * dd as f64 + 2.0 * dd as f64);

        let d0 = dilated_subdiff_distance(NormKind::L1, &x0, 0.0, 2000, &mut rng).unwrap();
        let h = {
            let zero = |h: &Mat| Mat::zeros(h.rows(), h.cols());
            gaussian_distance(&zero, dd, dd, 2000, &mut rng).unwrap()
        };
        assert!((d0.mean - h.mean).abs() < 4.0 * (d0.stderr + h.stderr));
    }

    #[test]
    fn dilated_distance_matches_brute_force() {
        // Compare the closed-form inner projection with projected gradient on g.
        let mut rng = Rng::new(9);
        let x0 = Mat::col_vector(&[1.5, 0.0, -2.0, 0.0]);
        let ss = norms::sign_support(NormKind::L1, &x0).unwrap();
        let h = gaussian(&mut rng, 4, 1);
        let alpha = 0.8;
        let fast = dilated_distance_sq(&ss, &h, alpha);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let t1 = -1.0 + 2.0 * i as f64 / 400.0;
                let t2 = -1.0 + 2.0 * j as f64 / 400.0;
                let g = Mat::col_vector(&[1.0, t1, -1.0, t2]);
                best = best.min((&h - &g.scale(alpha)).frob_norm_sq());
            }
        }
        assert!((fast - best).abs() < 1e-4, "{fast} vs {best}");
    }

    #[test]
    fn lower_bound_examples() {
        let mut rng = Rng::new(10);
        let x0 = sparse_signs(400, 4, &mut rng);
        let obj = ObjectiveSpec::weighted(&[(NormKind::L1, 1.0)], ConeKind::Full);
        let r = lower_bound(&x0, &obj).unwrap();
        assert!((r.m_low - 4.0 / 100.0).abs() < 1e-12);
        assert!((r.m_low_unscaled - 4.0).abs() < 1e-12);

        // Spread S&L: sparse Hadamard-like block with equal singular values.
        let d = 16;
        let k = 4;
        let mut x = Mat::zeros(d, d);
        let h = Mat::from_rows(&[
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, -1.0, 1.0, -1.0],
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, -1.0, 1.0, -1.0],
        ]);
        x.set_block(0, 0, &h);
        let obj = ObjectiveSpec::weighted(&[(NormKind::L1, 1.0), (NormKind::Nuclear, 1.0)], ConeKind::Full);
        let r = lower_bound(&x, &obj).unwrap();
        let nk2 = (d * d) as f64 * r.kappa_min * r.kappa_min;
        assert!((nk2 - ((k * k) as f64).min(2.0 * d as f64)).abs() < 1e-9, "{nk2}");
    }

    #[test]
    fn cone_dbar_closed_forms() {
        assert!((ConeKind::Psd.dbar(20).powi(2) - 0.7375).abs() < 1e-15);
        assert!((ConeKind::Symmetric.dbar(20).powi(2) - 0.475).abs() < 1e-15);
        assert_eq!(ConeKind::Full.dbar(20), 0.0);
    }

    #[test]
    fn upper_bound_single_term_and_closed_form() {
        let mut rng = Rng::new(11);
        let d = 32;
        let k = 6;
        let mut x0 = Mat::zeros(d, d);
        let u = rng.normal_vec(k);
        x0.set_block(0, 0, &Mat::outer(&u, &rng.normal_vec(k)));
        let beta: f64 = 0.5;
        let lam1 = beta * (d as f64 / k as f64).ln().sqrt();
        let lam2 = (1.0 - beta) * (d as f64).sqrt();
        let obj = ObjectiveSpec::weighted(&[(NormKind::L1, lam1), (NormKind::Nuclear, lam2)], ConeKind::Full);
        let closed = sl_closed_form(&x0, &obj).unwrap();
        let direct = (2.0 * beta * k as f64 * (1.0 + (d as f64 / k as f64).ln()).sqrt()
            + (1.0 - beta) * ((6 * d + 2 * d) as f64).sqrt())
        .powi(2);
        assert!((closed - direct).abs() < 1e-9 * direct);
        let alphas = AlphaChoice::Given(vec![(4.0 * (d as f64 / k as f64).ln()).sqrt(), 2.0 * (d as f64).sqrt()]);
        let r = upper_bound(&x0, &obj, &alphas, 300, &mut rng).unwrap();
        assert!(r.m_up.unwrap() <= closed);

        let single = ObjectiveSpec::weighted(&[(NormKind::Nuclear, 3.0)], ConeKind::Full);
        let r = upper_bound(&x0, &single, &AlphaChoice::Recipe, 300, &mut rng).unwrap();
        let t = r.terms[0];
        assert!((t.lambda_bar_up.unwrap() - 1.0).abs() < 1e-15);
        assert!((r.m_up.unwrap() - t.distance.unwrap().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn grid_search_not_worse_than_recipe() {
        let mut rng = Rng::new(12);
        let mut x0 = Mat::zeros(10, 10);
        x0.set_block(0, 0, &gaussian(&mut rng, 3, 3));
        let obj = ObjectiveSpec::weighted(&[(NormKind::L12Cols, 1.0)], ConeKind::Full);
        let rec = upper_bound(&x0, &obj, &AlphaChoice::Recipe, 400, &mut rng).unwrap();
        let grid = upper_bound(&x0, &obj, &AlphaChoice::GridSearch, 400, &mut rng).unwrap();
        assert!(grid.m_up.unwrap() <= rec.m_up.unwrap() * 1.05);
    }
}
