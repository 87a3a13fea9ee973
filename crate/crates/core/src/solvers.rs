//! Convex recovery by consensus ADMM and the exhaustive rank-1 nonconvex oracle.
//!
//! All convex programs share one splitting: each term (norm prox, norm-ball
//! epigraph, cone) owns a copy `y_j` of the variable, and the consensus
//! variable `x` is always the Euclidean projection onto `{A vec(x) = b}`:
//!
//! ```text
//! y_j ← prox_j(x − u_j)
//! x   ← P_aff(mean_j(y_j + u_j))
//! u_j ← u_j + y_j − x
//! ```
//!
//! The data are rescaled so the minimum-norm solution has unit norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cone_project, psd_project, ConeKind, Mode, ObjectiveSpec};
use crate::matcore::{norm2, svd, sym_eig_with, EigMethod, Mat, MinNormSolver, Rng};
use crate::measurements::{EnsembleKind, MeasurementOperator};
use crate::norms::{self, NormKind, SortedMagnitudes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub admm_rho: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub bisection_tol: f64,
    pub success_threshold: f64,
    pub secondary_threshold: f64,
    /// Seeds the random restarts of the nonconvex oracle.
    pub seed: u64,
    /// Keep the per-iteration consensus residual in the result.
    pub record_history: bool,
    /// Refit the convex solution on its support after ADMM stops.
    pub polish: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iters: 2000,
            admm_rho: 1.0,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            bisection_tol: 1e-5,
            success_threshold: 1e-4,
            secondary_threshold: 0.05,
            seed: 0,
            record_history: false,
            polish: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.admm_rho,
            self.primal_tol,
            self.dual_tol,
            self.bisection_tol,
            self.success_threshold,
            self.secondary_threshold,
        ];
        if self.max_iters == 0 || positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "solver tolerances and rho must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_hat: Mat,
    /// `‖x̂ − x0‖_F/‖x0‖_F` when `x0` was supplied.
    pub normalized_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_value: f64,
    /// `‖A(x̂) − b‖/‖b‖`.
    pub feasibility_residual: f64,
    /// Optimal level `t*` of the max-ratio program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
    /// Nonconvex oracle: no other support of the accepted size fits a different `X`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique: Option<bool>,
    /// The ADMM iterate was replaced by an exactly feasible point on its support.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub polished: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual_history: Vec<f64>,
}

impl SolveResult {
    pub fn succeeded(&self, threshold: f64) -> bool {
        self.normalized_error.is_some_and(|e| e <= threshold)
    }
}

fn normalized_error(x_hat: &Mat, truth: Option<&Mat>) -> Option<f64> {
    truth.map(|x0| (x_hat - x0).frob_norm() / x0.frob_norm())
}

fn feasibility(op: &MeasurementOperator, x: &Mat, b: &[f64]) -> f64 {
    let ax = op.apply(x).expect("shape checked");
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb > 0.0 {
        r / nb
    } else {
        r
    }
}

/// Euclidean projection onto `{x : A vec(x) = b}`.
enum Affine {
    /// `Q` has orthonormal rows spanning the row space; `x_mn` is the
    /// minimum-norm solution.
    Dense { q: Mat, x_mn: Vec<f64> },
    /// Entry sampling: observed coordinates are pinned.
    Entries { idx: Vec<usize>, vals: Vec<f64> },
}

impl Affine {
    fn new(op: &MeasurementOperator, b: &[f64]) -> Result<Affine> {
        let nb = norm2(b);
        if op.kind() == EnsembleKind::EntrySampling {
            let entries = op.entries().expect("entry operator");
            let mut seen: Vec<Option<f64>> = vec![None; op.n()];
            let (mut idx, mut vals) = (Vec::new(), Vec::new());
            for (&i, &v) in entries.iter().zip(b) {
                match seen[i] {
                    Some(prev) if (prev - v).abs() > 1e-5 * nb.max(f64::MIN_POSITIVE) => {
                        return Err(Error::InfeasibleData {
                            residual: (prev - v).abs() / nb,
                        })
                    }
                    Some(_) => {}
                    None => {
                        seen[i] = Some(v);
                        idx.push(i);
                        vals.push(v);
                    }
                }
            }
            return Ok(Affine::Entries { idx, vals });
        }
        let solver = MinNormSolver::new(op.matrix())?;
        let x_mn = solver.solve(b);
        let ax = op.matrix().matvec(&x_mn);
        let resid = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        if resid > 1e-5 * nb {
            return Err(Error::InfeasibleData { residual: resid / nb });
        }
        Ok(Affine::Dense {
            q: solver.row_basis(),
            x_mn,
        })
    }

    fn min_norm(&self, n: usize) -> Vec<f64> {
        match self {
            Affine::Dense { x_mn, .. } => x_mn.clone(),
            Affine::Entries { idx, vals } => {
                let mut v = vec![0.0; n];
                for (&i, &x) in idx.iter().zip(vals) {
                    v[i] = x;
                }
                v
            }
        }
    }

    fn rescale(&mut self, s: f64) {
        match self {
            Affine::Dense { x_mn, .. } => x_mn.iter_mut().for_each(|v| *v /= s),
            Affine::Entries { vals, .. } => vals.iter_mut().for_each(|v| *v /= s),
        }
    }

    fn project(&self, v: &mut [f64]) {
        match self {
            Affine::Dense { q, x_mn } => {
                let c = q.matvec(v);
                for (i, &ci) in c.iter().enumerate() {
                    crate::matcore::axpy(-ci, q.row(i), v);
                }
                for (vi, xi) in v.iter_mut().zip(x_mn) {
                    *vi += xi;
                }
            }
            Affine::Entries { idx, vals } => {
                for (&i, &x) in idx.iter().zip(vals) {
                    v[i] = x;
                }
            }
        }
    }
}

/// A norm ball in the epigraph block. On the PSD cone the nuclear norm equals
/// the trace, whose "ball" is the half-space `tr(Y) ≤ R`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Ball {
    Norm(NormKind),
    Trace,
}

/// Shrinkage data for one ball: `P_{B_R}(v)` shrinks by the threshold `θ(R)`.
enum BallData {
    Magnitudes(SortedMagnitudes),
    Spectrum(crate::matcore::SvdResult, SortedMagnitudes),
    Trace { tr: f64, d: f64 },
}

impl BallData {
    fn new(ball: Ball, v: &Mat) -> BallData {
        match ball {
            Ball::Trace => BallData::Trace {
                tr: v.trace(),
                d: v.rows() as f64,
            },
            Ball::Norm(NormKind::L1) => BallData::Magnitudes(SortedMagnitudes::new(v.as_slice())),
            Ball::Norm(NormKind::L12Cols) => BallData::Magnitudes(SortedMagnitudes::new(&v.column_norms())),
            Ball::Norm(NormKind::L12Rows) => BallData::Magnitudes(SortedMagnitudes::new(&v.row_norms())),
            Ball::Norm(NormKind::Nuclear) => {
                let s = svd(v).expect("finite iterate");
                let m = SortedMagnitudes::new(&s.s);
                BallData::Spectrum(s, m)
            }
        }
    }

    /// Largest radius at which the ball still binds.
    fn extent(&self) -> f64 {
        match self {
            BallData::Magnitudes(m) | BallData::Spectrum(_, m) => m.total(),
            BallData::Trace { tr, .. } => tr.max(0.0),
        }
    }

    /// `θ(R) = −d/dR ½ dist²(v, B_R)`.
    fn theta(&self, radius: f64) -> f64 {
        match self {
            BallData::Magnitudes(m) | BallData::Spectrum(_, m) => m.threshold(radius.max(0.0)),
            BallData::Trace { tr, d } => ((tr - radius) / d).max(0.0),
        }
    }

    fn project(&self, ball: Ball, v: &Mat, theta: f64) -> Mat {
        if theta == 0.0 {
            return v.clone();
        }
        match (self, ball) {
            (BallData::Spectrum(s, _), _) => {
                let vals: Vec<f64> = s.s.iter().map(|&x| (x - theta).max(0.0)).collect();
                s.recompose(&vals)
            }
            (BallData::Trace { .. }, _) => {
                let mut y = v.clone();
                for i in 0..y.rows() {
                    y[(i, i)] -= theta;
                }
                y
            }
            (_, Ball::Norm(kind)) => norms::prox(kind, v, theta),
            _ => unreachable!("trace data with a norm ball"),
        }
    }
}

enum Block {
    Prox {
        kind: NormKind,
        weight: f64,
    },
    Cone(ConeKind),
    /// `weight·tr(Y)` restricted to the PSD cone.
    PsdTrace {
        weight: f64,
    },
    /// `min t` subject to `‖y_i‖_(i) ≤ t·n_i`; owns one slot per ball.
    Epigraph {
        balls: Vec<(Ball, f64)>,
    },
}

impl Block {
    fn slots(&self) -> usize {
        match self {
            Block::Epigraph { balls } => balls.len(),
            _ => 1,
        }
    }
}

fn psd_shift_project(v: &Mat, shift: f64) -> Mat {
    let mut s = v.symmetrize();
    if shift != 0.0 {
        for i in 0..s.rows() {
            s[(i, i)] -= shift;
        }
    }
    psd_project(&s)
}

/// Solves the epigraph prox `min t + ρ/2 Σ‖y_i − v_i‖²` s.t. `‖y_i‖ ≤ t n_i`
/// from the stationarity condition `1 = ρ Σ n_i θ_i(t n_i)`.
fn epigraph_prox(balls: &[(Ball, f64)], vs: &[Mat], rho: f64) -> (Vec<Mat>, f64) {
    let data: Vec<BallData> = balls.iter().zip(vs).map(|(b, v)| BallData::new(b.0, v)).collect();
    let g = |t: f64| -> f64 {
        1.0 - rho
            * balls
                .iter()
                .zip(&data)
                .map(|((_, n), d)| n * d.theta(t * n))
                .sum::<f64>()
    };
    let t = if g(0.0) >= 0.0 {
        0.0
    } else {
        let mut hi = balls
            .iter()
            .zip(&data)
            .map(|((_, n), d)| d.extent() / n)
            .fold(0.0f64, f64::max);
        let mut lo = 0.0;
        // g is nondecreasing in t and g(hi) = 1.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let ys = balls
        .iter()
        .zip(&data)
        .zip(vs)
        .map(|(((ball, n), d), v)| d.project(*ball, v, d.theta(t * n)))
        .collect();
    (ys, t)
}

struct AdmmOutput {
    x: Mat,
    iterations: usize,
    converged: bool,
    t: Option<f64>,
    history: Vec<f64>,
}

fn run_admm(blocks: &[Block], affine: &Affine, shape: (usize, usize), cfg: &SolveConfig) -> AdmmOutput {
    let (d1, d2) = shape;
    let p: usize = blocks.iter().map(Block::slots).sum();
    let mut x = Mat::from_vec(d1, d2, affine.min_norm(d1 * d2)).expect("shape");
    let mut u: Vec<Mat> = vec![Mat::zeros(d1, d2); p];
    let mut y: Vec<Mat> = vec![x.clone(); p];
    let mut rho = cfg.admm_rho;
    let mut t_level = None;
    let mut history = Vec::new();
    let sqrt_p = (p as f64).sqrt();
    let mut balance_every = 10;
    let mut next_balance = balance_every;
    for it in 1..=cfg.max_iters {
        let mut slot = 0;
        for block in blocks {
            match block {
                Block::Prox { kind, weight } => {
                    let v = &x - &u[slot];
                    y[slot] = norms::prox(*kind, &v, weight / rho);
                }
                Block::Cone(cone) => {
                    let v = &x - &u[slot];
                    y[slot] = cone_project(*cone, &v).expect("square for cones");
                }
                Block::PsdTrace { weight } => {
                    let v = &x - &u[slot];
                    y[slot] = psd_shift_project(&v, weight / rho);
                }
                Block::Epigraph { balls } => {
                    let vs: Vec<Mat> = (0..balls.len()).map(|i| &x - &u[slot + i]).collect();
                    let (ys, t) = epigraph_prox(balls, &vs, rho);
                    for (i, yi) in ys.into_iter().enumerate() {
                        y[slot + i] = yi;
                    }
                    t_level = Some(t);
                }
            }
            slot += block.slots();
        }
        let x_prev = std::mem::replace(&mut x, Mat::zeros(d1, d2));
        for j in 0..p {
            x += &y[j];
            x += &u[j];
        }
        x.scale_mut(1.0 / p as f64);
        affine.project(x.as_mut_slice());

        let mut r2 = 0.0;
        let mut ynorm: f64 = 0.0;
        let mut unorm2 = 0.0;
        for j in 0..p {
            let diff = &y[j] - &x;
            r2 += diff.frob_norm_sq();
            u[j] += &diff;
            ynorm = ynorm.max(y[j].frob_norm());
            unorm2 += u[j].frob_norm_sq();
        }
        let r = r2.sqrt();
        let s = rho * sqrt_p * (&x - &x_prev).frob_norm();
        if cfg.record_history {
            history.push(r);
        }
        let eps_pri = cfg.primal_tol * sqrt_p * x.frob_norm().max(ynorm).max(1e-12);
        let eps_dual = cfg.dual_tol * (rho * unorm2.sqrt()).max(1e-12);
        if r <= eps_pri && s <= eps_dual {
            return AdmmOutput {
                x,
                iterations: it,
                converged: true,
                t: t_level,
                history,
            };
        }
        if it == next_balance {
            // Residual balancing; the scaled duals move inversely to ρ. Each
            // change doubles the wait before the next one, since ρ flipping
            // back and forth every few iterations can make ADMM diverge.
            let factor = if r > 10.0 * s {
                2.0
            } else if s > 10.0 * r {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u.iter_mut().for_each(|m| m.scale_mut(1.0 / factor));
                balance_every *= 2;
            }
            next_balance = it + balance_every;
        }
    }
    AdmmOutput {
        x,
        iterations: cfg.max_iters,
        converged: false,
        t: t_level,
        history,
    }
}

fn check_inputs(op: &MeasurementOperator, b: &[f64], cone: ConeKind, truth: Option<&Mat>) -> Result<()> {
    if b.len() != op.m() {
        return Err(Error::ShapeMismatch {
            expected: (op.m(), 1),
            got: (b.len(), 1),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (d1, d2) = op.signal_shape();
    if cone != ConeKind::Full && d1 != d2 {
        return Err(Error::NotSquare { rows: d1, cols: d2 });
    }
    if let Some(x0) = truth {
        if x0.shape() != (d1, d2) {
            return Err(Error::ShapeMismatch {
                expected: (d1, d2),
                got: x0.shape(),
            });
        }
    }
    Ok(())
}

fn zero_result(op: &MeasurementOperator, objective_value: f64, truth: Option<&Mat>) -> SolveResult {
    let (d1, d2) = op.signal_shape();
    let x_hat = Mat::zeros(d1, d2);
    SolveResult {
        normalized_error: normalized_error(&x_hat, truth),
        x_hat,
        iterations: 0,
        converged: true,
        objective_value,
        feasibility_residual: 0.0,
        t_star: Some(0.0),
        unique: None,
        polished: false,
        residual_history: Vec::new(),
    }
}

/// Prepared affine projector and the rescaling `s = ‖x_mn‖`.
fn prepare(op: &MeasurementOperator, b: &[f64]) -> Result<Option<(Affine, f64)>> {
    let mut affine = Affine::new(op, b)?;
    let s = norm2(&affine.min_norm(op.n()));
    if s == 0.0 {
        return Ok(None);
    }
    affine.rescale(s);
    Ok(Some((affine, s)))
}

/// `min Σ λ_i ‖x‖_(i)` s.t. `A(x) = b`, `x ∈ C`.
pub fn solve_weighted(
    op: &MeasurementOperator,
    b: &[f64],
    objective: &ObjectiveSpec,
    cfg: &SolveConfig,
    truth: Option<&Mat>,
) -> Result<SolveResult> {
    objective.validate()?;
    cfg.validate()?;
    if objective.mode != Mode::WeightedSum {
        return Err(Error::InvalidArgument(
            "solve_weighted needs a weighted-sum objective".into(),
        ));
    }
    check_inputs(op, b, objective.cone, truth)?;
    let Some((affine, scale)) = prepare(op, b)? else {
        return Ok(zero_result(op, 0.0, truth));
    };
    let mut blocks = Vec::new();
    let mut trace_weight = 0.0;
    for t in objective.terms.iter().filter(|t| t.weight > 0.0) {
        if objective.cone == ConeKind::Psd && t.kind == NormKind::Nuclear {
            trace_weight += t.weight;
        } else {
            blocks.push(Block::Prox {
                kind: t.kind,
                weight: t.weight,
            });
        }
    }
    match objective.cone {
        ConeKind::Full => {}
        ConeKind::Symmetric => blocks.push(Block::Cone(ConeKind::Symmetric)),
        ConeKind::Psd => blocks.push(Block::PsdTrace { weight: trace_weight }),
    }
    let out = run_admm(&blocks, &affine, op.signal_shape(), cfg);
    let (x_hat, polished) = polish_or_keep(op, b, out.x.scale(scale), objective.cone, cfg.polish, |x| {
        objective.eval(x)
    });
    Ok(SolveResult {
        normalized_error: normalized_error(&x_hat, truth),
        objective_value: objective.eval(&x_hat),
        feasibility_residual: feasibility(op, &x_hat, b),
        x_hat,
        iterations: out.iterations,
        converged: out.converged,
        t_star: None,
        unique: None,
        polished,
        residual_history: out.history,
    })
}

/// `min max_i ‖x‖_(i)/n_i` s.t. `A(x) = b`, `x ∈ C`, as `min t` over the
/// epigraph `{‖x‖_(i) ≤ t n_i}`.
pub fn solve_fbest(
    op: &MeasurementOperator,
    b: &[f64],
    reference: &[(NormKind, f64)],
    cone: ConeKind,
    cfg: &SolveConfig,
    truth: Option<&Mat>,
) -> Result<SolveResult> {
    cfg.validate()?;
    if reference.is_empty() || reference.iter().any(|(_, n)| !(*n > 0.0) || !n.is_finite()) {
        return Err(Error::InvalidArgument("reference norms must be positive".into()));
    }
    check_inputs(op, b, cone, truth)?;
    let Some((affine, scale)) = prepare(op, b)? else {
        return Ok(zero_result(op, 0.0, truth));
    };
    let balls: Vec<(Ball, f64)> = reference
        .iter()
        .map(|&(kind, n)| {
            let ball = if cone == ConeKind::Psd && kind == NormKind::Nuclear {
                Ball::Trace
            } else {
                Ball::Norm(kind)
            };
            (ball, n / scale)
        })
        .collect();
    let mut blocks = vec![Block::Epigraph { balls }];
    if cone != ConeKind::Full {
        blocks.push(Block::Cone(cone));
    }
    let out = run_admm(&blocks, &affine, op.signal_shape(), cfg);
    let ratio = |x: &Mat| {
        reference
            .iter()
            .map(|&(kind, n)| norms::eval(kind, x) / n)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (x_hat, polished) = polish_or_keep(op, b, out.x.scale(scale), cone, cfg.polish, ratio);
    let value = ratio(&x_hat);
    Ok(SolveResult {
        normalized_error: normalized_error(&x_hat, truth),
        objective_value: value,
        feasibility_residual: feasibility(op, &x_hat, b),
        x_hat,
        iterations: out.iterations,
        converged: out.converged,
        t_star: out.t,
        unique: None,
        polished,
        residual_history: out.history,
    })
}

/// Entries below this fraction of `max |x̂_ij|` are treated as off-support.
const POLISH_SUPPORT: f64 = 1e-3;
/// The refit may move at most this far from `x̂`, relative to `‖x̂‖_F`; polishing
/// refines a nearly converged iterate and must not jump to another point.
const POLISH_RADIUS: f64 = 1e-3;

/// Least-squares fit of `A(X) = b` with `X` restricted to the support of
/// `x_hat` (symmetrized unless the cone is `Full`). Accepted only when the fit
/// is exactly feasible, lies in the cone, stays within `POLISH_RADIUS` of
/// `x_hat` and does not raise the objective.
fn polish(
    op: &MeasurementOperator,
    b: &[f64],
    x_hat: &Mat,
    cone: ConeKind,
    value: impl Fn(&Mat) -> f64,
) -> Option<Mat> {
    let (d1, d2) = x_hat.shape();
    let v = x_hat.as_slice();
    let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(peak > 0.0) {
        return None;
    }
    let thr = POLISH_SUPPORT * peak;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    if cone == ConeKind::Full {
        groups.extend((0..v.len()).filter(|&i| v[i].abs() > thr).map(|i| vec![i]));
    } else {
        for i in 0..d1 {
            for j in i..d2 {
                if v[i * d2 + j].abs() > thr || v[j * d2 + i].abs() > thr {
                    groups.push(if i == j {
                        vec![i * d2 + i]
                    } else {
                        vec![i * d2 + j, j * d2 + i]
                    });
                }
            }
        }
    }
    let (m, s) = (op.m(), groups.len());
    if s == 0 || s > m {
        return None;
    }
    let a = op.matrix();
    let cols = Mat::from_fn(m, s, |r, k| groups[k].iter().map(|&i| a[(r, i)]).sum());
    let gram = cols.transpose().matmul(&cols);
    let z = small_solve(gram.as_slice().to_vec(), cols.tmatvec(b))?;
    let mut x = Mat::zeros(d1, d2);
    for (g, zk) in groups.iter().zip(&z) {
        for &i in g {
            x.as_mut_slice()[i] = *zk;
        }
    }
    if !(feasibility(op, &x, b) <= 1e-9 && (&x - x_hat).frob_norm() <= POLISH_RADIUS * x_hat.frob_norm()) {
        return None;
    }
    let gap = (&x - &cone_project(cone, &x).ok()?).frob_norm();
    if !(gap <= 1e-9 * x.frob_norm()) {
        return None;
    }
    let before = value(x_hat);
    (value(&x) <= before + 1e-9 * before.abs()).then_some(x)
}

fn polish_or_keep(
    op: &MeasurementOperator,
    b: &[f64],
    x_hat: Mat,
    cone: ConeKind,
    enabled: bool,
    value: impl Fn(&Mat) -> f64,
) -> (Mat, bool) {
    if !enabled {
        return (x_hat, false);
    }
    match polish(op, b, &x_hat, cone, value) {
        Some(x) => (x, true),
        None => (x_hat, false),
    }
}

/// Dispatches on the objective mode; max-ratio objectives need reference norms.
pub fn solve(
    op: &MeasurementOperator,
    b: &[f64],
    objective: &ObjectiveSpec,
    cfg: &SolveConfig,
    truth: Option<&Mat>,
) -> Result<SolveResult> {
    match objective.mode {
        Mode::WeightedSum => solve_weighted(op, b, objective, cfg, truth),
        Mode::MaxRatio => {
            objective.validate()?;
            let refs = objective
                .reference
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("max-ratio objective needs reference norms".into()))?;
            let pairs: Vec<(NormKind, f64)> = objective
                .terms
                .iter()
                .map(|t| t.kind)
                .zip(refs.iter().copied())
                .collect();
            solve_fbest(op, b, &pairs, objective.cone, cfg, truth)
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    first: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Combinations {
        Combinations {
            n,
            idx: (0..k).collect(),
            first: true,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        let k = self.idx.len();
        if self.first {
            self.first = false;
            return (k <= self.n).then(|| self.idx.clone());
        }
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in (i + 1)..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(self.idx.clone());
            }
        }
        None
    }
}

/// Solves the small dense system `M δ = r` by Gaussian elimination with
/// partial pivoting; `None` when singular.
fn small_solve(mut m: Vec<f64>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a * n + c].abs().total_cmp(&m[b * n + c].abs()))?;
        if m[p * n + c].abs() < 1e-300 {
            return None;
        }
        if p != c {
            for j in 0..n {
                m.swap(c * n + j, p * n + j);
            }
            r.swap(c, p);
        }
        for i in (c + 1)..n {
            let f = m[i * n + c] / m[c * n + c];
            if f != 0.0 {
                for j in c..n {
                    m[i * n + j] -= f * m[c * n + j];
                }
                r[i] -= f * r[c];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[i * n + j] * r[j]).sum();
        r[i] = (r[i] - s) / m[i * n + i];
    }
    r.iter().all(|v| v.is_finite()).then_some(r)
}

/// Measurement model restricted to a support: `f_i(z) = ⟨A_i, X(z)⟩`.
trait Restricted {
    fn dim(&self) -> usize;
    /// Residuals `f(z) − b` and the Jacobian (row-major `m x dim`).
    fn eval(&self, z: &[f64], jac: Option<&mut Vec<f64>>) -> Vec<f64>;
}

/// `X = σ x x^T` on `S x S`, with `M_i = sym(A_i[S, S])`.
struct SymModel<'a> {
    mats: Vec<f64>,
    s: usize,
    sign: f64,
    b: &'a [f64],
}

impl Restricted for SymModel<'_> {
    fn dim(&self) -> usize {
        self.s
    }

    fn eval(&self, z: &[f64], mut jac: Option<&mut Vec<f64>>) -> Vec<f64> {
        let s = self.s;
        let ss = s * s;
        let mut res = Vec::with_capacity(self.b.len());
        if let Some(j) = jac.as_deref_mut() {
            j.clear();
        }
        let mut mz = vec![0.0; s];
        for (i, bi) in self.b.iter().enumerate() {
            let m = &self.mats[i * ss..(i + 1) * ss];
            for r in 0..s {
                mz[r] = crate::matcore::dot(&m[r * s..(r + 1) * s], z);
            }
            res.push(self.sign * crate::matcore::dot(z, &mz) - bi);
            if let Some(j) = jac.as_deref_mut() {
                j.extend(mz.iter().map(|v| 2.0 * self.sign * v));
            }
        }
        res
    }
}

/// `X = x y^T` on `S1 x S2`, with `B_i = A_i[S1, S2]`.
struct BilinearModel<'a> {
    mats: Vec<f64>,
    s1: usize,
    s2: usize,
    b: &'a [f64],
}

impl Restricted for BilinearModel<'_> {
    fn dim(&self) -> usize {
        self.s1 + self.s2
    }

    fn eval(&self, z: &[f64], mut jac: Option<&mut Vec<f64>>) -> Vec<f64> {
        let (s1, s2) = (self.s1, self.s2);
        let (x, y) = z.split_at(s1);
        let blk = s1 * s2;
        let mut res = Vec::with_capacity(self.b.len());
        if let Some(j) = jac.as_deref_mut() {
            j.clear();
        }
        let mut by = vec![0.0; s1];
        let mut btx = vec![0.0; s2];
        for (i, bi) in self.b.iter().enumerate() {
            let m = &self.mats[i * blk..(i + 1) * blk];
            for r in 0..s1 {
                by[r] = crate::matcore::dot(&m[r * s2..(r + 1) * s2], y);
            }
            res.push(crate::matcore::dot(x, &by) - bi);
            if let Some(j) = jac.as_deref_mut() {
                btx.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..s1 {
                    crate::matcore::axpy(x[r], &m[r * s2..(r + 1) * s2], &mut btx);
                }
                j.extend_from_slice(&by);
                j.extend_from_slice(&btx);
            }
        }
        res
    }
}

/// Levenberg-Marquardt on `½‖f(z) − b‖²`; returns the final point and residual norm.
fn levenberg_marquardt(model: &dyn Restricted, z0: Vec<f64>, target: f64) -> (Vec<f64>, f64) {
    let n = model.dim();
    let mut z = z0;
    let mut jac = Vec::new();
    let mut res = model.eval(&z, Some(&mut jac));
    let mut cost = norm2(&res);
    let m = res.len();
    let mut mu = -1.0;
    let mut stall = 0;
    for _ in 0..300 {
        if cost <= target {
            break;
        }
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            for a in 0..n {
                jtr[a] += row[a] * res[i];
                for c in a..n {
                    jtj[a * n + c] += row[a] * row[c];
                }
            }
        }
        for a in 0..n {
            for c in 0..a {
                jtj[a * n + c] = jtj[c * n + a];
            }
        }
        if mu < 0.0 {
            let dmax = (0..n).map(|a| jtj[a * n + a]).fold(0.0f64, f64::max);
            mu = 1e-3 * dmax.max(1e-12);
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut sys = jtj.clone();
            for a in 0..n {
                sys[a * n + a] += mu;
            }
            let Some(delta) = small_solve(sys, jtr.iter().map(|v| -v).collect()) else {
                mu *= 4.0;
                continue;
            };
            let cand: Vec<f64> = z.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let cres = model.eval(&cand, None);
            let ccost = norm2(&cres);
            if ccost < cost {
                stall = if ccost > cost * (1.0 - 1e-6) { stall + 1 } else { 0 };
                z = cand;
                res = model.eval(&z, Some(&mut jac));
                cost = ccost;
                mu = (mu / 3.0).max(1e-300);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved || stall >= 10 {
            break;
        }
    }
    (z, cost)
}

fn embed_rank1(d: usize, rows: &[usize], cols: &[usize], x: &[f64], y: &[f64], sign: f64) -> Mat {
    let mut out = Mat::zeros(d, d);
    for (a, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            out[(i, j)] = sign * x[a] * y[c];
        }
    }
    out
}

/// Top eigenpair (largest magnitude) of a symmetric matrix.
fn top_eigpair(m: &Mat) -> (f64, Vec<f64>) {
    let e = sym_eig_with(m, EigMethod::Tridiagonal).expect("symmetric");
    let n = m.rows();
    let i = if e.values[0].abs() >= e.values[n - 1].abs() {
        0
    } else {
        n - 1
    };
    (e.values[i], (0..n).map(|r| e.vectors[(r, i)]).collect())
}

/// Exhaustive search for a rank-1 `X = ±aa^T` (or `ab^T`) with the smallest support.
pub fn solve_nonconvex_rank1(
    op: &MeasurementOperator,
    b: &[f64],
    d: usize,
    k_max: usize,
    symmetric: bool,
    cfg: &SolveConfig,
    truth: Option<&Mat>,
) -> Result<SolveResult> {
    cfg.validate()?;
    if op.signal_shape() != (d, d) {
        return Err(Error::ShapeMismatch {
            expected: (d, d),
            got: op.signal_shape(),
        });
    }
    check_inputs(op, b, ConeKind::Full, truth)?;
    if k_max == 0 || k_max > d {
        return Err(Error::InvalidArgument(format!("k_max must be in 1..={d}")));
    }
    let count = if symmetric {
        binomial(d, k_max)
    } else {
        binomial(d, k_max).saturating_mul(binomial(d, k_max))
    };
    if count > 1_000_000 {
        return Err(Error::BudgetExceeded { count });
    }
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok(zero_result(op, 0.0, truth));
    }
    let accept = 1e-8 * nb;
    let a = op.matrix();
    let m = op.m();
    let mut rng = Rng::new(cfg.seed);
    // ‖X0‖_F ≈ rms(b) for isotropic rows; sets the scale of random starts.
    let scale = (nb / (m as f64).sqrt()).sqrt();
    let back = op.adjoint(b)?.scale(1.0 / m as f64);
    let entry = |i: usize, r: usize, c: usize| a.row(i)[r * d + c];

    let mut iterations = 0;
    for size in 1..=k_max {
        let mut fits: Vec<(Mat, f64)> = Vec::new();
        if symmetric {
            for s in Combinations::new(d, size) {
                let mut mats = Vec::with_capacity(m * size * size);
                for i in 0..m {
                    for &r in &s {
                        for &c in &s {
                            mats.push(0.5 * (entry(i, r, c) + entry(i, c, r)));
                        }
                    }
                }
                let sub = Mat::from_fn(size, size, |r, c| 0.5 * (back[(s[r], s[c])] + back[(s[c], s[r])]));
                let (lam, v) = top_eigpair(&sub);
                let mut best: Option<(Mat, f64)> = None;
                for sign in [1.0, -1.0] {
                    let model = SymModel {
                        mats: mats.clone(),
                        s: size,
                        sign,
                        b,
                    };
                    let mut starts = Vec::new();
                    if lam * sign > 0.0 {
                        starts.push(v.iter().map(|x| x * lam.abs().sqrt()).collect::<Vec<f64>>());
                    }
                    for _ in 0..5 {
                        starts.push(
                            rng.normal_vec(size)
                                .iter()
                                .map(|x| x * scale / (size as f64).sqrt())
                                .collect(),
                        );
                    }
                    for z0 in starts {
                        iterations += 1;
                        let (z, cost) = levenberg_marquardt(&model, z0, 1e-3 * accept);
                        if cost <= accept && best.as_ref().is_none_or(|(_, c)| cost < *c) {
                            best = Some((embed_rank1(d, &s, &s, &z, &z, sign), cost));
                            break;
                        }
                    }
                    if best.is_some() {
                        break;
                    }
                }
                if let Some(fit) = best {
                    fits.push(fit);
                }
            }
        } else {
            for s1 in Combinations::new(d, size) {
                for s2 in Combinations::new(d, size) {
                    let mut mats = Vec::with_capacity(m * size * size);
                    for i in 0..m {
                        for &r in &s1 {
                            for &c in &s2 {
                                mats.push(entry(i, r, c));
                            }
                        }
                    }
                    let model = BilinearModel {
                        mats,
                        s1: size,
                        s2: size,
                        b,
                    };
                    let sub = Mat::from_fn(size, size, |r, c| back[(s1[r], s2[c])]);
                    let sv = svd(&sub)?;
                    let root = sv.s[0].sqrt();
                    let mut starts = vec![(0..size)
                        .map(|i| sv.u[(i, 0)] * root)
                        .chain((0..size).map(|j| sv.vt[(0, j)] * root))
                        .collect::<Vec<f64>>()];
                    for _ in 0..5 {
                        starts.push(
                            rng.normal_vec(2 * size)
                                .iter()
                                .map(|x| x * scale / (size as f64).sqrt())
                                .collect(),
                        );
                    }
                    for z0 in starts {
                        iterations += 1;
                        let (z, cost) = levenberg_marquardt(&model, z0, 1e-3 * accept);
                        if cost <= accept {
                            let (x, y) = z.split_at(size);
                            fits.push((embed_rank1(d, &s1, &s2, x, y, 1.0), cost));
                            break;
                        }
                    }
                }
            }
        }
        if let Some(first) = fits.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
            let x_hat = first.0.clone();
            let tol = 1e-6 * x_hat.frob_norm().max(1.0);
            let unique = fits.iter().all(|(x, _)| (x - &x_hat).frob_norm() <= tol);
            return Ok(SolveResult {
                normalized_error: normalized_error(&x_hat, truth),
                objective_value: size as f64,
                feasibility_residual: feasibility(op, &x_hat, b),
                x_hat,
                iterations,
                converged: true,
                t_star: None,
                unique: Some(unique),
                polished: false,
                residual_history: Vec::new(),
            });
        }
    }
    Err(Error::NoFit { k_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{planted_gaussian, SlrSpec};
    use crate::measurements::{draw, DrawOptions};

    fn sparse_vec(n: usize, k: usize, rng: &mut Rng) -> Mat {
        let mut v = vec![0.0; n];
        for i in rng.subset(n, k) {
            v[i] = rng.normal();
        }
        Mat::col_vector(&v)
    }

    fn l1() -> ObjectiveSpec {
        ObjectiveSpec::weighted(&[(NormKind::L1, 1.0)], ConeKind::Full)
    }

    #[test]
    fn determined_system_recovers_exactly() {
        let mut rng = Rng::new(1);
        let x0 = gaussian_mat(&mut rng, 4, 4);
        let op = draw(EnsembleKind::Gaussian, 16, (4, 4), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        for obj in [
            l1(),
            ObjectiveSpec::weighted(&[(NormKind::Nuclear, 2.0), (NormKind::L12Cols, 0.3)], ConeKind::Full),
        ] {
            let r = solve_weighted(&op, &b, &obj, &SolveConfig::default(), Some(&x0)).unwrap();
            assert!(r.normalized_error.unwrap() < 1e-6, "{:?}", r.normalized_error);
        }
    }

    fn gaussian_mat(rng: &mut Rng, r: usize, c: usize) -> Mat {
        crate::matcore::gaussian(rng, r, c)
    }

    #[test]
    fn one_sparse_l1_recovery() {
        let mut rng = Rng::new(2);
        let mut ok = 0;
        for _ in 0..100 {
            let x0 = sparse_vec(20, 1, &mut rng);
            let op = draw(EnsembleKind::Gaussian, 10, (20, 1), &mut rng, DrawOptions::default()).unwrap();
            let b = op.apply(&x0).unwrap();
            let r = solve_weighted(&op, &b, &l1(), &SolveConfig::default(), Some(&x0)).unwrap();
            assert!(r.feasibility_residual < 1e-9);
            ok += r.succeeded(1e-4) as usize;
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn entry_sampling_and_infeasible_data() {
        let op = MeasurementOperator::from_entries((3, 1), vec![0, 0, 2]).unwrap();
        let r = solve_weighted(&op, &[1.0, 1.0, -2.0], &l1(), &SolveConfig::default(), None).unwrap();
        assert!((&r.x_hat - &Mat::col_vector(&[1.0, 0.0, -2.0])).max_abs() < 1e-6);
        assert!(matches!(
            solve_weighted(&op, &[1.0, 2.0, -2.0], &l1(), &SolveConfig::default(), None),
            Err(Error::InfeasibleData { .. })
        ));
        let dense =
            MeasurementOperator::from_seed(EnsembleKind::Gaussian, 3, (1, 1), 4, DrawOptions::default()).unwrap();
        assert!(solve_weighted(&dense, &[1.0, 2.0, 3.0], &l1(), &SolveConfig::default(), None).is_err());
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut rng = Rng::new(3);
        let op = draw(EnsembleKind::Gaussian, 3, (3, 3), &mut rng, DrawOptions::default()).unwrap();
        let r = solve_weighted(&op, &[0.0; 3], &l1(), &SolveConfig::default(), None).unwrap();
        assert_eq!(r.x_hat, Mat::zeros(3, 3));
    }

    #[test]
    fn psd_weighted_recovery() {
        let mut rng = Rng::new(4);
        let s = planted_gaussian(&SlrSpec::square(8, 3, 1, true), &mut rng).unwrap();
        let op = draw(EnsembleKind::Gaussian, 30, (8, 8), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&s.x).unwrap();
        let obj = ObjectiveSpec::weighted(&[(NormKind::Nuclear, 1.0), (NormKind::L1, 0.2)], ConeKind::Psd);
        let r = solve_weighted(&op, &b, &obj, &SolveConfig::default(), Some(&s.x)).unwrap();
        assert!(r.succeeded(1e-4), "{:?} {}", r.normalized_error, r.iterations);
    }

    #[test]
    fn kkt_certificate_at_l1_solution() {
        // At an ℓ1 minimizer some z has A^T z = e on the support and |A^T z| ≤ 1 off it.
        let mut rng = Rng::new(5);
        let x0 = sparse_vec(30, 3, &mut rng);
        let op = draw(EnsembleKind::Gaussian, 15, (30, 1), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        let r = solve_weighted(&op, &b, &l1(), &SolveConfig::default(), None).unwrap();
        assert!(r.converged);
        let xs = r.x_hat.as_slice();
        let top = r.x_hat.max_abs();
        let sup: Vec<usize> = (0..30).filter(|&i| xs[i].abs() > 1e-6 * top).collect();
        assert!(sup.len() <= 15, "{sup:?}");
        let a = op.matrix();
        // Minimum-norm z solving A_S^T z = e_S.
        let ast = Mat::from_fn(sup.len(), op.m(), |i, j| a[(j, sup[i])]);
        let e: Vec<f64> = sup.iter().map(|&i| xs[i].signum()).collect();
        let z = crate::matcore::lstsq_min_norm(&ast, &e).unwrap();
        let g = a.tmatvec(&z);
        let stationarity: f64 = sup.iter().zip(&e).map(|(&i, s)| (g[i] - s).powi(2)).sum::<f64>().sqrt();
        assert!(stationarity <= 1e-4);
        let off = (0..30)
            .filter(|i| !sup.contains(i))
            .map(|i| g[i].abs())
            .fold(0.0, f64::max);
        assert!(off <= 1.0 + 1e-4, "{off}");
    }

    #[test]
    fn residual_trend_decreases() {
        let mut rng = Rng::new(6);
        let x0 = sparse_vec(40, 4, &mut rng);
        let op = draw(EnsembleKind::Gaussian, 20, (40, 1), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        let cfg = SolveConfig {
            record_history: true,
            primal_tol: 1e-14,
            dual_tol: 1e-14,
            max_iters: 400,
            ..Default::default()
        };
        let r = solve_weighted(&op, &b, &l1(), &cfg, None).unwrap();
        let h = &r.residual_history;
        assert!(h.len() >= 40, "{}", h.len());
        let w = h.len() / 4;
        let median = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(&h[h.len() - w..]) < median(&h[..w]));
    }

    #[test]
    fn polish_snaps_truncated_runs_to_the_support() {
        let mut rng = Rng::new(16);
        let cfg = SolveConfig {
            max_iters: 150,
            ..Default::default()
        };
        let x0 = sparse_vec(40, 3, &mut rng);
        let op = draw(EnsembleKind::Gaussian, 20, (40, 1), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        let r = solve_weighted(&op, &b, &l1(), &cfg, Some(&x0)).unwrap();
        assert!(r.polished);
        assert!(r.normalized_error.unwrap() < 1e-10);

        let s = planted_gaussian(&SlrSpec::square(10, 3, 1, true), &mut rng).unwrap();
        let op = draw(EnsembleKind::Gaussian, 40, (10, 10), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&s.x).unwrap();
        let refs = [
            (NormKind::Nuclear, norms::eval(NormKind::Nuclear, &s.x)),
            (NormKind::L1, norms::eval(NormKind::L1, &s.x)),
        ];
        let r = solve_fbest(&op, &b, &refs, ConeKind::Psd, &cfg, Some(&s.x)).unwrap();
        assert!(r.polished);
        assert!(r.normalized_error.unwrap() < 1e-10);
        assert!((r.objective_value - 1.0).abs() < 1e-9);

        // Far below the transition the iterate is dense and nothing is fitted.
        let x0 = gaussian_mat(&mut rng, 6, 6);
        let op = draw(EnsembleKind::Gaussian, 8, (6, 6), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        let r = solve_weighted(&op, &b, &l1(), &cfg, Some(&x0)).unwrap();
        assert!(!r.polished);
    }

    #[test]
    fn epigraph_prox_matches_direct_search() {
        let mut rng = Rng::new(7);
        let v1 = gaussian_mat(&mut rng, 4, 4);
        let v2 = gaussian_mat(&mut rng, 4, 4);
        let balls = [(Ball::Norm(NormKind::L1), 2.0), (Ball::Norm(NormKind::Nuclear), 1.5)];
        let rho = 0.7;
        let (ys, t) = epigraph_prox(&balls, &[v1.clone(), v2.clone()], rho);
        let value = |t: f64| {
            let p1 = norms::ball_project(NormKind::L1, &v1, 2.0 * t);
            let p2 = norms::ball_project(NormKind::Nuclear, &v2, 1.5 * t);
            t + 0.5 * rho * ((&p1 - &v1).frob_norm_sq() + (&p2 - &v2).frob_norm_sq())
        };
        let grid_best = (0..4000)
            .map(|i| i as f64 * 0.002)
            .map(value)
            .fold(f64::INFINITY, f64::min);
        assert!(value(t) <= grid_best + 1e-9);
        assert!(norms::eval(NormKind::L1, &ys[0]) <= 2.0 * t + 1e-9);
        assert!(norms::eval(NormKind::Nuclear, &ys[1]) <= 1.5 * t + 1e-9);
    }

    #[test]
    fn fbest_level_at_most_one() {
        let mut rng = Rng::new(8);
        for m in [20, 40] {
            let s = planted_gaussian(&SlrSpec::square(8, 4, 1, true), &mut rng).unwrap();
            let op = draw(EnsembleKind::Gaussian, m, (8, 8), &mut rng, DrawOptions::default()).unwrap();
            let b = op.apply(&s.x).unwrap();
            let refs = [
                (NormKind::Nuclear, norms::eval(NormKind::Nuclear, &s.x)),
                (NormKind::L1, norms::eval(NormKind::L1, &s.x)),
            ];
            let r = solve_fbest(&op, &b, &refs, ConeKind::Psd, &SolveConfig::default(), Some(&s.x)).unwrap();
            assert!(r.t_star.unwrap() <= 1.0 + 1e-5, "{:?}", r.t_star);
            assert!(r.objective_value <= 1.0 + 1e-4);
        }
    }

    #[test]
    fn fbest_psd_recovery_at_half_n() {
        let mut rng = Rng::new(9);
        let mut ok = 0;
        let trials = 20;
        for _ in 0..trials {
            let s = planted_gaussian(&SlrSpec::square(16, 8, 1, true), &mut rng).unwrap();
            let op = draw(EnsembleKind::Gaussian, 128, (16, 16), &mut rng, DrawOptions::default()).unwrap();
            let b = op.apply(&s.x).unwrap();
            let obj = ObjectiveSpec::max_ratio(&[NormKind::Nuclear, NormKind::L1], ConeKind::Psd).with_reference(&s.x);
            let r = solve(&op, &b, &obj, &SolveConfig::default(), Some(&s.x)).unwrap();
            ok += r.succeeded(1e-4) as usize;
        }
        assert!(ok >= 19, "{ok}/{trials}");
    }

    #[test]
    fn nonconvex_determined_and_psd() {
        let mut rng = Rng::new(10);
        let d = 6;
        let mut a = vec![0.0; d];
        a[1] = 1.3;
        a[4] = -0.7;
        let x0 = Mat::outer(&a, &a);
        let op = draw(EnsembleKind::Gaussian, d * d, (d, d), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        let r = solve_nonconvex_rank1(&op, &b, d, 3, true, &SolveConfig::default(), Some(&x0)).unwrap();
        assert!(r.normalized_error.unwrap() < 1e-8);
        assert_eq!(r.unique, Some(true));
        let eig = crate::matcore::sym_eig(&r.x_hat).unwrap();
        assert!(*eig.values.last().unwrap() >= -1e-10);
        let neg = x0.scale(-1.0);
        let b = op.apply(&neg).unwrap();
        let r = solve_nonconvex_rank1(&op, &b, d, 3, true, &SolveConfig::default(), Some(&neg)).unwrap();
        assert!(r.normalized_error.unwrap() < 1e-8);
    }

    #[test]
    fn nonconvex_bilinear_and_errors() {
        let mut rng = Rng::new(11);
        let d = 5;
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        x[0] = 1.0;
        x[3] = 2.0;
        y[2] = -1.5;
        y[4] = 0.5;
        let x0 = Mat::outer(&x, &y);
        let op = draw(EnsembleKind::Gaussian, 20, (d, d), &mut rng, DrawOptions::default()).unwrap();
        let b = op.apply(&x0).unwrap();
        let r = solve_nonconvex_rank1(&op, &b, d, 2, false, &SolveConfig::default(), Some(&x0)).unwrap();
        assert!(r.normalized_error.unwrap() < 1e-8, "{:?}", r.normalized_error);

        let big = draw(EnsembleKind::Gaussian, 2, (40, 40), &mut rng, DrawOptions::default()).unwrap();
        assert!(matches!(
            solve_nonconvex_rank1(&big, &[1.0, 1.0], 40, 12, true, &SolveConfig::default(), None),
            Err(Error::BudgetExceeded { .. })
        ));
        let dense = Mat::outer(&[1.0; 5], &[1.0; 5]);
        let b = op.apply(&dense).unwrap();
        assert!(matches!(
            solve_nonconvex_rank1(&op, &b, d, 2, true, &SolveConfig::default(), None),
            Err(Error::NoFit { k_max: 2 })
        ));
    }

    #[test]
    fn combinations_enumerate_all() {
        let all: Vec<Vec<usize>> = Combinations::new(5, 3).collect();
        assert_eq!(all.len() as u128, binomial(5, 3));
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[9], vec![2, 3, 4]);
        assert_eq!(binomial(40, 12), 5_586_853_480);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = SolveConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SolveConfig>(&s).unwrap(), cfg);
        assert_eq!(serde_json::from_str::<SolveConfig>("{}").unwrap(), cfg);
        let bad = SolveConfig { primal_tol: 0.0, ..cfg };
        assert!(bad.validate().is_err());
    }
}
