//! Measurement ensembles `b = A vec(X)` and the deterministic failure certificates.
//!
//! `vec` is row-major: `vec(X)[i·d2 + j] = X[i, j]`. Every operator keeps its
//! explicit `m x n` realization.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ConeKind, Mode, ObjectiveSpec};
use crate::matcore::{gaussian, max_singular, min_singular, norm2, rademacher, sym_eig_with, EigMethod, Mat, Rng};
use crate::norms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Gaussian,
    Rademacher,
    EntrySampling,
    QuadraticLifted,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Gaussian => "gaussian",
            EnsembleKind::Rademacher => "rademacher",
            EnsembleKind::EntrySampling => "entry_sampling",
            EnsembleKind::QuadraticLifted => "quadratic_lifted",
        }
    }

    pub fn parse(s: &str) -> Option<EnsembleKind> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" => Some(EnsembleKind::Gaussian),
            "rademacher" => Some(EnsembleKind::Rademacher),
            "entry_sampling" | "entries" => Some(EnsembleKind::EntrySampling),
            "quadratic_lifted" | "quadratic" => Some(EnsembleKind::QuadraticLifted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DrawOptions {
    /// Remove duplicate rows of entry sampling.
    #[serde(default)]
    pub dedup: bool,
    /// Quadratic vectors uniform on the radius-`√d` sphere instead of Gaussian.
    #[serde(default)]
    pub sphere: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    kind: EnsembleKind,
    shape: (usize, usize),
    seed: u64,
    matrix: Mat,
    entries: Option<Vec<usize>>,
    vectors: Option<Vec<Vec<f64>>>,
    dedup_applied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub sigma_min_adjoint: f64,
    pub ax0_norm: f64,
    /// `‖A x̄0‖² / σ²_min(A^T)`.
    pub ratio: f64,
    /// Normalized column coherence `max_{i≠j} (v_i^T v_j)² / (‖v_i‖²‖v_j‖²)`.
    pub coherence: Option<f64>,
}

pub fn draw(
    kind: EnsembleKind,
    m: usize,
    shape: (usize, usize),
    rng: &mut Rng,
    options: DrawOptions,
) -> Result<MeasurementOperator> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one measurement".into()));
    }
    let seed = rng.split();
    MeasurementOperator::from_seed(kind, m, shape, seed, options)
}

impl MeasurementOperator {
    /// Deterministic realization from `(kind, m, shape, seed, options)`.
    pub fn from_seed(
        kind: EnsembleKind,
        m: usize,
        shape: (usize, usize),
        seed: u64,
        options: DrawOptions,
    ) -> Result<MeasurementOperator> {
        let (d1, d2) = shape;
        let n = d1 * d2;
        if n == 0 {
            return Err(Error::InvalidArgument("empty signal shape".into()));
        }
        let mut r = Rng::new(seed);
        let mut op = MeasurementOperator {
            kind,
            shape,
            seed,
            matrix: Mat::zeros(0, n),
            entries: None,
            vectors: None,
            dedup_applied: false,
        };
        match kind {
            EnsembleKind::Gaussian => op.matrix = gaussian(&mut r, m, n),
            EnsembleKind::Rademacher => op.matrix = rademacher(&mut r, m, n),
            EnsembleKind::EntrySampling => {
                let mut idx: Vec<usize> = (0..m).map(|_| r.below(n)).collect();
                if options.dedup {
                    let mut seen = vec![false; n];
                    idx.retain(|&i| !std::mem::replace(&mut seen[i], true));
                    op.dedup_applied = true;
                }
                op.matrix = entry_matrix(&idx, n);
                op.entries = Some(idx);
            }
            EnsembleKind::QuadraticLifted => {
                if d1 != d2 {
                    return Err(Error::NotSquare { rows: d1, cols: d2 });
                }
                let vs: Vec<Vec<f64>> = (0..m)
                    .map(|_| {
                        let mut v = r.normal_vec(d1);
                        if options.sphere {
                            let s = (d1 as f64).sqrt() / norm2(&v);
                            v.iter_mut().for_each(|x| *x *= s);
                        }
                        v
                    })
                    .collect();
                op.matrix = quadratic_matrix(&vs);
                op.vectors = Some(vs);
            }
        }
        Ok(op)
    }

    /// Entry-sampling operator observing the given flat indices.
    pub fn from_entries(shape: (usize, usize), entries: Vec<usize>) -> Result<MeasurementOperator> {
        let n = shape.0 * shape.1;
        if entries.is_empty() || entries.iter().any(|&i| i >= n) {
            return Err(Error::InvalidArgument("entry indices out of range".into()));
        }
        Ok(MeasurementOperator {
            kind: EnsembleKind::EntrySampling,
            shape,
            seed: 0,
            matrix: entry_matrix(&entries, n),
            entries: Some(entries),
            vectors: None,
            dedup_applied: false,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    pub fn signal_shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dedup_applied(&self) -> bool {
        self.dedup_applied
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn entries(&self) -> Option<&[usize]> {
        self.entries.as_deref()
    }

    pub fn vectors(&self) -> Option<&[Vec<f64>]> {
        self.vectors.as_deref()
    }

    fn check_shape(&self, x: &Mat) -> Result<()> {
        if x.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: x.shape(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &Mat) -> Result<Vec<f64>> {
        self.check_shape(x)?;
        Ok(self.matrix.matvec(x.as_slice()))
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Mat> {
        if y.len() != self.m() {
            return Err(Error::ShapeMismatch {
                expected: (self.m(), 1),
                got: (y.len(), 1),
            });
        }
        Mat::from_vec(self.shape.0, self.shape.1, self.matrix.tmatvec(y))
    }

    /// The first `m` rows, as a nested operator.
    pub fn truncate(&self, m: usize) -> Result<MeasurementOperator> {
        if m == 0 || m > self.m() {
            return Err(Error::InvalidArgument(format!("cannot keep {m} of {} rows", self.m())));
        }
        let mut out = self.clone();
        out.matrix = self.matrix.block(0, 0, m, self.n());
        if let Some(e) = &mut out.entries {
            e.truncate(m);
        }
        if let Some(v) = &mut out.vectors {
            v.truncate(m);
        }
        Ok(out)
    }

    /// Entry sampling with duplicate rows removed (same null space).
    pub fn deduplicated(&self) -> MeasurementOperator {
        match &self.entries {
            Some(e) if !self.dedup_applied => {
                let mut seen = vec![false; self.n()];
                let idx: Vec<usize> = e
                    .iter()
                    .copied()
                    .filter(|&i| !std::mem::replace(&mut seen[i], true))
                    .collect();
                let mut out = self.clone();
                out.matrix = entry_matrix(&idx, self.n());
                out.entries = Some(idx);
                out.dedup_applied = true;
                out
            }
            _ => self.clone(),
        }
    }

    /// `σ_min(A^T) = inf_{‖z‖=1} ‖A^T z‖`; zero when `m > n` or rows are dependent.
    pub fn sigma_min_adjoint(&self) -> Result<f64> {
        if self.m() > self.n() {
            return Ok(0.0);
        }
        if let Some(e) = &self.entries {
            let mut seen = vec![false; self.n()];
            let distinct = e.iter().all(|&i| !std::mem::replace(&mut seen[i], true));
            return Ok(if distinct { 1.0 } else { 0.0 });
        }
        min_singular(&self.matrix)
    }

    pub fn coherence(&self) -> Option<f64> {
        let vs = self.vectors.as_ref()?;
        let sq: Vec<f64> = vs.iter().map(|v| crate::matcore::dot(v, v)).collect();
        let mut best: f64 = 0.0;
        for i in 0..vs.len() {
            for j in (i + 1)..vs.len() {
                let ip = crate::matcore::dot(&vs[i], &vs[j]);
                best = best.max(ip * ip / (sq[i] * sq[j]));
            }
        }
        Some(best)
    }

    pub fn stats(&self, x0: &Mat) -> Result<EnsembleStats> {
        self.check_shape(x0)?;
        let nrm = x0.frob_norm();
        if nrm == 0.0 {
            return Err(Error::ZeroSignal);
        }
        let op = self.deduplicated();
        let sigma = op.sigma_min_adjoint()?;
        if sigma <= 0.0 {
            return Err(Error::Degenerate);
        }
        let ax = norm2(&op.apply(&x0.scale(1.0 / nrm))?);
        Ok(EnsembleStats {
            sigma_min_adjoint: sigma,
            ax0_norm: ax,
            ratio: ax * ax / (sigma * sigma),
            coherence: self.coherence(),
        })
    }

    /// CSV dump: a metadata record `kind,d1,d2,m,seed,dedup`, then one record
    /// per row of the realization (entry index, `v_i`, or the dense row).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        out.write_record([
            self.kind.name().to_string(),
            self.shape.0.to_string(),
            self.shape.1.to_string(),
            self.m().to_string(),
            self.seed.to_string(),
            self.dedup_applied.to_string(),
        ])?;
        match (&self.entries, &self.vectors) {
            (Some(e), _) => {
                for i in e {
                    out.write_record([i.to_string()])?;
                }
            }
            (_, Some(vs)) => {
                for v in vs {
                    out.write_record(v.iter().map(|x| format!("{x:e}")))?;
                }
            }
            _ => {
                for i in 0..self.m() {
                    out.write_record(self.matrix.row(i).iter().map(|x| format!("{x:e}")))?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<MeasurementOperator> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = rdr.records();
        let head = records
            .next()
            .ok_or_else(|| Error::Parse("empty operator dump".into()))??;
        let field = |i: usize| head.get(i).ok_or_else(|| Error::Parse("short metadata record".into()));
        let kind = EnsembleKind::parse(field(0)?).ok_or_else(|| Error::Parse("unknown ensemble".into()))?;
        let num = |i: usize| -> Result<u64> { field(i)?.parse::<u64>().map_err(|e| Error::Parse(e.to_string())) };
        let shape = (num(1)? as usize, num(2)? as usize);
        let m = num(3)? as usize;
        let seed = num(4)?;
        let dedup = field(5)? == "true";
        let n = shape.0 * shape.1;
        let rows: Vec<Vec<f64>> = records
            .map(|rec| {
                let rec = rec?;
                rec.iter()
                    .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        if rows.len() != m {
            return Err(Error::Parse(format!("expected {m} rows, found {}", rows.len())));
        }
        let mut op = MeasurementOperator {
            kind,
            shape,
            seed,
            matrix: Mat::zeros(0, n),
            entries: None,
            vectors: None,
            dedup_applied: dedup,
        };
        match kind {
            EnsembleKind::EntrySampling => {
                let idx: Vec<usize> = rows
                    .iter()
                    .map(|r| r.first().copied().unwrap_or(-1.0) as usize)
                    .collect();
                if idx.iter().any(|&i| i >= n) {
                    return Err(Error::Parse("entry index out of range".into()));
                }
                op.matrix = entry_matrix(&idx, n);
                op.entries = Some(idx);
            }
            EnsembleKind::QuadraticLifted => {
                if rows.iter().any(|r| r.len() != shape.0) {
                    return Err(Error::Parse("bad quadratic vector length".into()));
                }
                op.matrix = quadratic_matrix(&rows);
                op.vectors = Some(rows);
            }
            _ => {
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Parse("bad row length".into()));
                }
                op.matrix = Mat::from_vec(m, n, rows.concat())?;
            }
        }
        Ok(op)
    }
}

fn entry_matrix(idx: &[usize], n: usize) -> Mat {
    let mut a = Mat::zeros(idx.len(), n);
    for (r, &i) in idx.iter().enumerate() {
        a[(r, i)] = 1.0;
    }
    a
}

fn quadratic_matrix(vs: &[Vec<f64>]) -> Mat {
    let d = vs.first().map_or(0, |v| v.len());
    let mut a = Mat::zeros(vs.len(), d * d);
    for (r, v) in vs.iter().enumerate() {
        let row = a.row_mut(r);
        for i in 0..d {
            for j in 0..d {
                row[i * d + j] = v[i] * v[j];
            }
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureCertificate {
    pub certified: bool,
    /// Closed-form lower bound on `ρ(x0, ∂f(x0))`.
    pub rho_lower: f64,
    /// `‖A x̄0‖ / σ_min(A^T)`.
    pub threshold: f64,
    pub stats: EnsembleStats,
}

/// Closed-form lower bound on `ρ(x0, ∂f(x0))`: `Σ λ̄_i κ_i` for weighted sums,
/// `κ_min` otherwise.
pub fn rho_lower_bound(x0: &Mat, objective: &ObjectiveSpec) -> Result<f64> {
    let r = geometry::lower_bound(x0, objective)?;
    let mix: f64 = r.terms.iter().map(|t| t.lambda_bar_low * t.kappa).sum();
    Ok(match objective.mode {
        Mode::WeightedSum => mix.max(r.kappa_min),
        Mode::MaxRatio => r.kappa_min,
    })
}

/// Certified iff `ρ_lower > ‖A x̄0‖/σ_min(A^T)`; then `x0` is not a minimizer.
pub fn failure_certificate(
    op: &MeasurementOperator,
    x0: &Mat,
    objective: &ObjectiveSpec,
) -> Result<FailureCertificate> {
    if x0.frob_norm() == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if objective.cone != ConeKind::Full {
        return Err(Error::InvalidArgument(
            "failure_certificate takes the full cone; use generalized_certificate".into(),
        ));
    }
    let stats = op.stats(x0)?;
    let rho = rho_lower_bound(x0, objective)?;
    let threshold = stats.ratio.sqrt();
    Ok(FailureCertificate {
        certified: rho > threshold,
        rho_lower: rho,
        threshold,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateReason {
    /// `m < dim R`.
    Rank,
    Correlation,
    NotCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedCertificate {
    pub certified: bool,
    pub reason: CertificateReason,
    pub rho_lower: f64,
    pub sigma_max_pr: f64,
    pub sigma_min: f64,
    /// Sampled upper estimate of `σ_C(A^T)`.
    pub sigma_c_estimate: f64,
    /// Value of `σ_C` used in the test: `min(estimate, √((1 − D̄(C))/8))` for
    /// proper cones, 1 for the full space.
    pub sigma_c_used: f64,
    /// `σ_max(P_R A^T) / (σ_C σ_min(A^T))`.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateOptions {
    pub sigma_c_samples: usize,
    pub refine_steps: usize,
    pub orthogonality_samples: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            sigma_c_samples: 10_000,
            refine_steps: 300,
            orthogonality_samples: 50,
        }
    }
}

fn sigma_c_ratio(op: &MeasurementOperator, cone: ConeKind, z: &[f64]) -> f64 {
    let g = op.adjoint(z).expect("length checked");
    let nrm = g.frob_norm();
    if nrm == 0.0 {
        return f64::INFINITY;
    }
    geometry::cone_project(cone, &g).expect("shape checked").frob_norm() / nrm
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Sampled minimum of `‖P_C(A^T z)‖/‖A^T z‖` over unit `z`, refined by a
/// shrinking random local search around the best sample.
pub fn sigma_c_estimate(
    op: &MeasurementOperator,
    cone: ConeKind,
    opts: &CertificateOptions,
    rng: &mut Rng,
) -> Result<f64> {
    if cone == ConeKind::Full {
        return Ok(1.0);
    }
    let (d1, d2) = op.signal_shape();
    if d1 != d2 {
        return Err(Error::NotSquare { rows: d1, cols: d2 });
    }
    let m = op.m();
    let mut best_z = unit(rng.normal_vec(m));
    let mut best = sigma_c_ratio(op, cone, &best_z);
    for _ in 1..opts.sigma_c_samples {
        let z = unit(rng.normal_vec(m));
        let v = sigma_c_ratio(op, cone, &z);
        if v < best {
            best = v;
            best_z = z;
        }
    }
    let mut step = 0.5;
    for _ in 0..opts.refine_steps {
        let z = unit(
            best_z
                .iter()
                .map(|x| x + step * rng.normal() / (m as f64).sqrt())
                .collect(),
        );
        let v = sigma_c_ratio(op, cone, &z);
        if v < best {
            best = v;
            best_z = z;
        } else {
            step *= 0.97;
        }
    }
    Ok(best)
}

/// Samples of `{y ∈ C* : ⟨x0, y⟩ = 0}`: skew matrices (symmetric and PSD
/// cones) and `Π W Π` with `W` PSD and `Π` the projector onto `null(x0)`.
fn bad_cone_samples(cone: ConeKind, x0: &Mat, count: usize, rng: &mut Rng) -> Result<Vec<Mat>> {
    let d = x0.rows();
    let mut out = Vec::new();
    if cone == ConeKind::Full {
        return Ok(out);
    }
    for _ in 0..count {
        let g = gaussian(rng, d, d);
        out.push(&g - &g.transpose());
    }
    if cone == ConeKind::Psd {
        let eig = sym_eig_with(&x0.symmetrize(), EigMethod::Tridiagonal)?;
        let tol = 1e-9 * eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let null: Vec<usize> = (0..d).filter(|&i| eig.values[i].abs() <= tol).collect();
        if !null.is_empty() {
            let mut q = Mat::zeros(d, null.len());
            for (c, &i) in null.iter().enumerate() {
                for r in 0..d {
                    q[(r, c)] = eig.vectors[(r, i)];
                }
            }
            for _ in 0..count {
                let g = q.matmul(&gaussian(rng, null.len(), null.len()));
                out.push(g.matmul_t(&g));
            }
        }
    }
    Ok(out)
}

/// Certificate with a cone constraint and a subspace `R` (orthonormal basis).
pub fn generalized_certificate(
    op: &MeasurementOperator,
    x0: &Mat,
    objective: &ObjectiveSpec,
    basis: &[Mat],
    opts: &CertificateOptions,
    rng: &mut Rng,
) -> Result<GeneralizedCertificate> {
    if x0.frob_norm() == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if basis.is_empty() || basis.iter().any(|b| b.shape() != x0.shape()) {
        return Err(Error::InvalidArgument(
            "subspace basis must be nonempty and match the signal".into(),
        ));
    }
    op.check_shape(x0)?;
    for y in bad_cone_samples(objective.cone, x0, opts.orthogonality_samples, rng)? {
        let yn = y.frob_norm();
        for b in basis {
            let overlap = b.inner(&y).abs() / yn;
            if overlap > 1e-8 {
                return Err(Error::SubspaceNotOrthogonal { overlap });
            }
        }
    }

    let dim = basis.len();
    let m = op.m();
    // P_R A^T in coordinates: dim x m.
    let pr = Mat::from_fn(dim, m, |j, i| {
        crate::matcore::dot(basis[j].as_slice(), op.matrix().row(i))
    });
    let sigma_max_pr = max_singular(&pr)?;
    let sigma_min = op.deduplicated().sigma_min_adjoint()?;
    let sigma_c_estimate = sigma_c_estimate(op, objective.cone, opts, rng)?;
    let sigma_c_used = match objective.cone {
        ConeKind::Full => 1.0,
        cone => sigma_c_estimate.min(((1.0 - cone.dbar(x0.rows())) / 8.0).sqrt()),
    };
    let rho_lower = subspace_rho_lower(x0, objective, basis)?;
    let threshold = if sigma_min > 0.0 {
        sigma_max_pr / (sigma_c_used * sigma_min)
    } else {
        f64::INFINITY
    };
    let (certified, reason) = if objective.mode == Mode::WeightedSum && m < dim {
        (true, CertificateReason::Rank)
    } else if rho_lower > threshold {
        (true, CertificateReason::Correlation)
    } else {
        (false, CertificateReason::NotCertified)
    };
    Ok(GeneralizedCertificate {
        certified,
        reason,
        rho_lower,
        sigma_max_pr,
        sigma_min,
        sigma_c_estimate,
        sigma_c_used,
        threshold,
    })
}

/// Lower bound on `ρ(R, ∂f(x0))`.
///
/// `(υ/√τ) min_i ‖e_i‖/√(‖e_i‖² + cap_i)` with `υ = min_i ‖P_R e_i‖/‖e_i‖`,
/// valid when `R ⊂ ∩ T_i` and the `P_R e_i` are pairwise nonnegatively
/// correlated; the `κ` bound when `R = span(x0)`; 0 when neither applies.
pub fn subspace_rho_lower(x0: &Mat, objective: &ObjectiveSpec, basis: &[Mat]) -> Result<f64> {
    let xbar = x0.scale(1.0 / x0.frob_norm());
    let mut best: f64 = 0.0;
    if basis.len() == 1 && (basis[0].inner(&xbar).abs() - 1.0).abs() < 1e-10 {
        best = rho_lower_bound(x0, objective)?;
    }
    let supports: Vec<norms::SignedSupport> = objective
        .terms
        .iter()
        .map(|t| norms::sign_support(t.kind, x0))
        .collect::<Result<_>>()?;
    let inside = supports.iter().all(|ss| geometry::basis_in_support(basis, ss, 1e-9));
    let signs: Vec<Mat> = supports.iter().map(|s| s.sign.clone()).collect();
    let gram = geometry::projected_sign_gram(basis, &signs);
    let nonneg = gram.iter().flatten().all(|&v| v >= -1e-12);
    if inside && nonneg {
        let tau = supports.len() as f64;
        let upsilon = supports
            .iter()
            .enumerate()
            .map(|(i, ss)| gram[i][i].sqrt() / ss.sign.frob_norm())
            .fold(f64::INFINITY, f64::min);
        let rho_e = supports
            .iter()
            .map(|ss| ss.sign.frob_norm() / geometry::sup_subgradient_norm(ss))
            .fold(f64::INFINITY, f64::min);
        best = best.max(upsilon / tau.sqrt() * rho_e);
    }
    Ok(best)
}
