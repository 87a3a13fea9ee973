//! Phase-transition grids, boundary extraction, sample-complexity search and
//! the ensemble and bound reports.
//!
//! Every instance is generated from `derive_seed(seed, [d, m, instance])`, so
//! all programs of a config see the same signals and operators, and reruns
//! reproduce the CSV byte for byte except the `wall_ms` column.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constructions::{SignalTemplate, StructuredSignal};
use crate::error::{Error, Result};
use crate::geometry::{self, AlphaChoice, BoundReport, ConeKind, Mode, ObjectiveSpec};
use crate::matcore::{derive_seed, Mat, Rng};
use crate::measurements::{self, draw, DrawOptions, EnsembleKind, MeasurementOperator};
use crate::norms::NormKind;
use crate::solvers::{self, SolveConfig};

/// λ values for weighted-sum comparison runs.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.1, 0.2, 0.35, 0.5, 1.0];

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "SIMREC_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "program", rename_all = "snake_case")]
pub enum Program {
    /// Weighted sum or max-ratio; max-ratio references come from each instance's `x0`.
    Convex(ObjectiveSpec),
    NonconvexRank1 {
        k_max: usize,
        #[serde(default = "default_true")]
        symmetric: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Program {
    pub fn describe(&self) -> String {
        match self {
            Program::Convex(o) => o.describe(),
            Program::NonconvexRank1 { k_max, symmetric } => format!("rank1[k<={k_max},sym={symmetric}]"),
        }
    }

    /// `first + λ·second` for each λ.
    pub fn weighted_family(first: NormKind, second: NormKind, cone: ConeKind, lambdas: &[f64]) -> Vec<Program> {
        lambdas
            .iter()
            .map(|&l| Program::Convex(ObjectiveSpec::weighted(&[(first, 1.0), (second, l)], cone)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        match self {
            Program::Convex(o) => o.validate(),
            Program::NonconvexRank1 { k_max, .. } if *k_max == 0 => {
                Err(Error::InvalidArgument("k_max must be positive".into()))
            }
            Program::NonconvexRank1 { .. } => Ok(()),
        }
    }

    /// Runs the program on `b = A(x0)`.
    pub fn solve(
        &self,
        op: &MeasurementOperator,
        b: &[f64],
        x0: &Mat,
        cfg: &SolveConfig,
    ) -> Result<solvers::SolveResult> {
        match self {
            Program::Convex(o) => {
                let obj = if o.mode == Mode::MaxRatio && o.reference.is_none() {
                    o.clone().with_reference(x0)
                } else {
                    o.clone()
                };
                solvers::solve(op, b, &obj, cfg, Some(x0))
            }
            Program::NonconvexRank1 { k_max, symmetric } => {
                solvers::solve_nonconvex_rank1(op, b, x0.rows(), *k_max, *symmetric, cfg, Some(x0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MGrid {
    Absolute(Vec<usize>),
    /// Fractions of `n`.
    Fraction(Vec<f64>),
    /// `count` log-spaced values in `[min, max_fraction·n]`.
    LogSpaced {
        count: usize,
        min: usize,
        max_fraction: f64,
    },
}

impl MGrid {
    pub fn values(&self, n: usize) -> Vec<usize> {
        let mut v: Vec<usize> = match self {
            MGrid::Absolute(ms) => ms.clone(),
            MGrid::Fraction(fs) => fs.iter().map(|f| (f * n as f64).round() as usize).collect(),
            MGrid::LogSpaced {
                count,
                min,
                max_fraction,
            } => {
                let lo = (*min).max(1) as f64;
                let hi = (max_fraction * n as f64).max(lo);
                (0..*count)
                    .map(|i| {
                        let t = if *count > 1 {
                            i as f64 / (*count - 1) as f64
                        } else {
                            0.0
                        };
                        (lo * (hi / lo).powf(t)).round() as usize
                    })
                    .collect()
            }
        };
        v.retain(|&m| m >= 1);
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: Vec<usize>,
    pub m: MGrid,
}

fn default_instances() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: SignalTemplate,
    pub ensemble: EnsembleKind,
    #[serde(default)]
    pub ensemble_options: DrawOptions,
    pub programs: Vec<Program>,
    pub grid: GridSpec,
    #[serde(default = "default_instances")]
    pub instances_per_cell: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolveConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.grid.d.is_empty() || self.grid.d.contains(&0) {
            return bad("grid needs positive d values");
        }
        if self.instances_per_cell == 0 {
            return bad("instances_per_cell must be at least 1");
        }
        if self.programs.is_empty() {
            return bad("no programs to run");
        }
        for &d in &self.grid.d {
            let (d1, d2) = self.generator.shape(d);
            if self.grid.m.values(d1 * d2).is_empty() {
                return bad("m grid is empty");
            }
            for p in &self.programs {
                if let Program::Convex(o) = p {
                    if o.cone != ConeKind::Full && d1 != d2 {
                        return bad("cone constraints need square signals");
                    }
                }
            }
        }
        self.solver.validate()?;
        self.programs.iter().try_for_each(Program::validate)
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// 16 hex digits of SHA-256 over the canonical JSON and the program index.
    pub fn config_hash(&self, program: usize) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_string(self).expect("serializable").as_bytes());
        h.update(program.to_le_bytes());
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn instance_seed(&self, d: usize, m: usize, instance: usize) -> u64 {
        derive_seed(self.seed, &[d as u64, m as u64, instance as u64])
    }

    /// Signal, operator and data for one grid instance.
    pub fn instance(
        &self,
        d: usize,
        m: usize,
        instance: usize,
    ) -> Result<(StructuredSignal, MeasurementOperator, Vec<f64>)> {
        let rng = Rng::new(self.instance_seed(d, m, instance));
        let signal = self.generator.generate(d, &mut rng.child(&[0]))?;
        let op = draw(
            self.ensemble,
            m,
            signal.x.shape(),
            &mut rng.child(&[1]),
            self.ensemble_options,
        )?;
        let b = op.apply(&signal.x)?;
        Ok((signal, op, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_error: Option<String>,
}

impl InstanceOutcome {
    pub fn succeeded(&self, threshold: f64) -> bool {
        self.error.is_some_and(|e| e <= threshold)
    }

    fn failed(e: Error) -> InstanceOutcome {
        InstanceOutcome {
            error: None,
            iterations: 0,
            converged: false,
            solver_error: Some(e.to_string()),
        }
    }
}

/// Outcomes of every program on one instance, in program order.
pub fn evaluate_instance(config: &ExperimentConfig, d: usize, m: usize, instance: usize) -> Vec<InstanceOutcome> {
    let (signal, op, b) = match config.instance(d, m, instance) {
        Ok(t) => t,
        Err(e) => return vec![InstanceOutcome::failed(e); config.programs.len()],
    };
    config
        .programs
        .iter()
        .map(|p| match p.solve(&op, &b, &signal.x, &config.solver) {
            Ok(r) => InstanceOutcome {
                error: r.normalized_error,
                iterations: r.iterations,
                converged: r.converged,
                solver_error: None,
            },
            Err(e) => InstanceOutcome::failed(e),
        })
        .collect()
}

/// `[instance][program]` outcomes of one cell; instances run in parallel.
pub fn evaluate_cell(config: &ExperimentConfig, d: usize, m: usize) -> Vec<Vec<InstanceOutcome>> {
    (0..config.instances_per_cell)
        .into_par_iter()
        .map(|i| evaluate_instance(config, d, m, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config_hash: String,
    /// Index into the config's program list; not persisted.
    #[serde(skip)]
    pub program: usize,
    pub d: usize,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub mean_error: f64,
    pub median_error: f64,
    #[serde(rename = "mean_iters")]
    pub mean_iterations: f64,
    #[serde(rename = "wall_ms")]
    pub wall_time_ms: f64,
    pub solver_errors: usize,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn wall_time(&self) -> f64 {
        self.wall_time_ms / 1e3
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregates one program's column of a cell.
pub fn summarize(
    hash: String,
    program: usize,
    d: usize,
    m: usize,
    outcomes: &[Vec<InstanceOutcome>],
    threshold: f64,
    wall_ms: f64,
) -> CellResult {
    let column: Vec<&InstanceOutcome> = outcomes.iter().map(|o| &o[program]).collect();
    let mut errors: Vec<f64> = column.iter().filter_map(|o| o.error).collect();
    let mean_error = if errors.is_empty() {
        f64::NAN
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    CellResult {
        config_hash: hash,
        program,
        d,
        m,
        trials: column.len(),
        successes: column.iter().filter(|o| o.succeeded(threshold)).count(),
        mean_error,
        median_error: median(&mut errors),
        mean_iterations: column.iter().map(|o| o.iterations as f64).sum::<f64>() / column.len().max(1) as f64,
        wall_time_ms: wall_ms,
        solver_errors: column.iter().filter(|o| o.solver_error.is_some()).count(),
    }
}

/// Worker pool honoring `SIMREC_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer"
            )));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn read_cells(path: &Path) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone)]
pub struct GridRun {
    /// Cells in grid order, program-major within each `(d, m)`.
    pub cells: Vec<CellResult>,
    /// Cells taken from an existing CSV instead of being recomputed.
    pub resumed: usize,
}

impl GridRun {
    pub fn solver_errors(&self) -> usize {
        self.cells.iter().map(|c| c.solver_errors).sum()
    }

    pub fn for_program(&self, program: usize) -> Vec<CellResult> {
        self.cells.iter().filter(|c| c.program == program).cloned().collect()
    }
}

/// Runs every `(d, m)` cell. With `out`, rows are appended to the CSV as each
/// cell finishes, the config goes to the JSON sidecar, and cells already
/// present under the same config hash are reused.
pub fn run_grid(config: &ExperimentConfig, out: Option<&Path>) -> Result<GridRun> {
    config.validate()?;
    let pool = thread_pool()?;
    let hashes: Vec<String> = (0..config.programs.len()).map(|p| config.config_hash(p)).collect();
    let mut done: HashMap<(String, usize, usize), CellResult> = HashMap::new();
    let mut writer = None;
    if let Some(path) = out {
        let existing = path.exists() && std::fs::metadata(path)?.len() > 0;
        if existing {
            for c in read_cells(path)? {
                done.insert((c.config_hash.clone(), c.d, c.m), c);
            }
        }
        std::fs::write(
            crate::constructions::sidecar_path(path),
            serde_json::to_string_pretty(config)?,
        )?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        writer = Some(csv::WriterBuilder::new().has_headers(!existing).from_writer(file));
    }
    let mut cells = Vec::new();
    let mut resumed = 0;
    for &d in &config.grid.d {
        let (d1, d2) = config.generator.shape(d);
        for m in config.grid.m.values(d1 * d2) {
            let cached: Option<Vec<CellResult>> = hashes
                .iter()
                .enumerate()
                .map(|(p, h)| {
                    done.get(&(h.clone(), d, m)).map(|c| CellResult {
                        program: p,
                        ..c.clone()
                    })
                })
                .collect();
            if let Some(c) = cached {
                resumed += c.len();
                cells.extend(c);
                continue;
            }
            let start = Instant::now();
            let outcomes = pool.install(|| evaluate_cell(config, d, m));
            let wall = start.elapsed().as_secs_f64() * 1e3;
            for (p, h) in hashes.iter().enumerate() {
                let cell = summarize(h.clone(), p, d, m, &outcomes, config.solver.success_threshold, wall);
                if let Some(w) = writer.as_mut() {
                    w.serialize(&cell)?;
                }
                log::info!(
                    "d={d} m={m} {}: {}/{}",
                    config.programs[p].describe(),
                    cell.successes,
                    cell.trials
                );
                cells.push(cell);
            }
            if let Some(w) = writer.as_mut() {
                w.flush()?;
            }
        }
    }
    Ok(GridRun { cells, resumed })
}

/// Pool-adjacent-violators fit of a nondecreasing sequence under weights.
pub fn isotonic_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, n2) = blocks.pop().expect("len > 1");
            let (v1, w1, n1) = blocks.pop().expect("len > 1");
            let w = w1 + w2;
            let mean = if w > 0.0 {
                (v1 * w1 + v2 * w2) / w
            } else {
                0.5 * (v1 + v2)
            };
            blocks.push((mean, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, n)| std::iter::repeat_n(v, n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub level: f64,
    /// `(d, m*)` per column that brackets the level.
    pub points: Vec<(usize, f64)>,
    /// Columns without a rate on each side of the level.
    pub omitted: Vec<usize>,
    /// Columns whose rates were not monotone in `m` before the isotonic fit.
    pub isotonic_adjusted: Vec<usize>,
}

/// First crossing of `level` by the isotonic success-rate curve, linearly
/// interpolated in `m`.
fn crossing(ms: &[f64], rates: &[f64], level: f64) -> Option<f64> {
    let j = rates.iter().position(|&r| r >= level)?;
    if j == 0 {
        return None;
    }
    let (m0, m1, r0, r1) = (ms[j - 1], ms[j], rates[j - 1], rates[j]);
    Some(m0 + (level - r0) / (r1 - r0) * (m1 - m0))
}

/// Success-rate boundary per `d`; the cells must come from a single program.
pub fn extract_boundary(cells: &[CellResult], level: f64) -> Result<BoundaryCurve> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    if cells.windows(2).any(|w| w[0].config_hash != w[1].config_hash) {
        return Err(Error::InvalidArgument(
            "cells mix several configs; filter by config_hash".into(),
        ));
    }
    let mut columns: BTreeMap<usize, Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        columns.entry(c.d).or_default().push(c);
    }
    let mut curve = BoundaryCurve {
        level,
        points: Vec::new(),
        omitted: Vec::new(),
        isotonic_adjusted: Vec::new(),
    };
    for (&d, col) in &mut columns {
        col.sort_by_key(|c| c.m);
        let ms: Vec<f64> = col.iter().map(|c| c.m as f64).collect();
        let raw: Vec<f64> = col.iter().map(|c| c.rate()).collect();
        let w: Vec<f64> = col.iter().map(|c| c.trials as f64).collect();
        let fit = isotonic_increasing(&raw, &w);
        if fit.iter().zip(&raw).any(|(a, b)| (a - b).abs() > 1e-12) {
            log::info!("d={d}: success rates not monotone in m; isotonic fit applied");
            curve.isotonic_adjusted.push(d);
        }
        match crossing(&ms, &fit, level) {
            Some(m) => curve.points.push((d, m)),
            None => {
                log::warn!("d={d}: no m on both sides of level {level}; column omitted");
                curve.omitted.push(d);
            }
        }
    }
    if curve.points.is_empty() {
        let d = curve.omitted.first().copied().unwrap_or(0);
        return Err(Error::InsufficientCoverage { d, level });
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub m: usize,
    pub successes: usize,
    pub trials: usize,
    /// `[instance][program]`.
    pub outcomes: Vec<Vec<InstanceOutcome>>,
}

impl Probe {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub d: usize,
    pub target: f64,
    /// Probed `m` whose success rate is nearest the target.
    pub m_star: usize,
    /// Crossing of the isotonic fit through the probes, when bracketed.
    pub m_interpolated: Option<f64>,
    /// Probes sorted by `m`.
    pub probes: Vec<Probe>,
    /// Some rate drop between probes exceeds three binomial standard errors.
    pub non_monotone: bool,
}

/// Adaptive bisection over `m` on the first program of `config`.
pub fn find_sample_complexity(config: &ExperimentConfig, d: usize, target_rate: f64) -> Result<SampleComplexity> {
    find_sample_complexity_from(config, d, target_rate, None)
}

/// As [`find_sample_complexity`], starting the bracket search at `start`
/// (default `n/4`).
pub fn find_sample_complexity_from(
    config: &ExperimentConfig,
    d: usize,
    target_rate: f64,
    start: Option<usize>,
) -> Result<SampleComplexity> {
    config.validate()?;
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidArgument("target rate must lie in (0, 1)".into()));
    }
    let pool = thread_pool()?;
    let (d1, d2) = config.generator.shape(d);
    let n = d1 * d2;
    let threshold = config.solver.success_threshold;
    let mut probes: BTreeMap<usize, Probe> = BTreeMap::new();
    let mut probe = |m: usize| -> f64 {
        let p = probes.entry(m).or_insert_with(|| {
            let outcomes = pool.install(|| evaluate_cell(config, d, m));
            let successes = outcomes.iter().filter(|o| o[0].succeeded(threshold)).count();
            log::info!("d={d} m={m}: {successes}/{}", outcomes.len());
            Probe {
                m,
                successes,
                trials: outcomes.len(),
                outcomes,
            }
        });
        p.rate()
    };
    let mut m = start.unwrap_or(n / 4).clamp(1, n);
    // Bracket with lo failing (rate < target) and hi succeeding.
    let (mut lo, mut hi) = if probe(m) < target_rate {
        loop {
            if m == n {
                break (m, None);
            }
            let next = ((m as f64 * 1.5).ceil() as usize).clamp(m + 1, n);
            if probe(next) >= target_rate {
                break (m, Some(next));
            }
            m = next;
        }
    } else {
        loop {
            if m == 1 {
                break (0, Some(1));
            }
            let next = ((m as f64 / 1.5).floor() as usize).clamp(1, m - 1);
            if probe(next) < target_rate {
                break (next, Some(m));
            }
            m = next;
        }
    };
    if let Some(h) = hi.as_mut() {
        while lo > 0 && *h - lo > ((*h as f64 * 0.025).round() as usize).max(1) {
            let mid = (lo + *h) / 2;
            if probe(mid) < target_rate {
                lo = mid;
            } else {
                *h = mid;
            }
        }
    }
    let probes: Vec<Probe> = probes.into_values().collect();
    let m_star = probes
        .iter()
        .min_by(|a, b| {
            (a.rate() - target_rate)
                .abs()
                .total_cmp(&(b.rate() - target_rate).abs())
                .then(a.m.cmp(&b.m))
        })
        .map(|p| p.m)
        .expect("at least one probe");
    let ms: Vec<f64> = probes.iter().map(|p| p.m as f64).collect();
    let rates: Vec<f64> = probes.iter().map(Probe::rate).collect();
    let weights: Vec<f64> = probes.iter().map(|p| p.trials as f64).collect();
    let fit = isotonic_increasing(&rates, &weights);
    let mut non_monotone = false;
    for i in 0..probes.len() {
        for j in (i + 1)..probes.len() {
            let se = (0.25 / probes[i].trials as f64 + 0.25 / probes[j].trials as f64).sqrt();
            if rates[i] - rates[j] > 3.0 * se {
                non_monotone = true;
            }
        }
    }
    if non_monotone {
        log::warn!("d={d}: success rates violate monotonicity beyond binomial noise");
    }
    Ok(SampleComplexity {
        d,
        target: target_rate,
        m_star,
        m_interpolated: crossing(&ms, &fit, target_rate),
        probes,
        non_monotone,
    })
}

/// Test signal for ensemble studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestSignal {
    /// Gaussian entries; lifted `aa^T` for the quadratic ensemble.
    #[default]
    Gaussian,
    /// All entries equal: maximally incoherent.
    Flat,
    /// A single nonzero entry: `‖x̄0‖_∞ = 1`.
    Spiky,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCase {
    pub kind: EnsembleKind,
    pub d1: usize,
    pub d2: usize,
    pub m: usize,
    #[serde(default)]
    pub signal: TestSignal,
    #[serde(default)]
    pub options: DrawOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub case: EnsembleCase,
    pub seeds: usize,
    /// `2m/n`; absent for the quadratic ensemble, whose constant is unknown.
    pub bound: Option<f64>,
    pub ratio_mean: f64,
    pub ratio_median: f64,
    pub ratio_max: f64,
    pub exceed_fraction: Option<f64>,
    /// Draws with `σ_min(A^T) = 0` after deduplication; counted as exceedances.
    pub degenerate: usize,
    /// `3 log d/d` for the quadratic ensemble.
    pub coherence_bound: Option<f64>,
    pub coherence_median: Option<f64>,
    pub coherence_exceed_fraction: Option<f64>,
    /// Smallest `c` with `‖A(X̄0)‖/σ_min ≤ c √m log d/d` on every draw.
    pub c_empirical: Option<f64>,
}

fn test_signal(case: &EnsembleCase, rng: &mut Rng) -> Mat {
    let (d1, d2) = (case.d1, case.d2);
    if case.kind == EnsembleKind::QuadraticLifted {
        let a: Vec<f64> = match case.signal {
            TestSignal::Gaussian => rng.normal_vec(d1),
            TestSignal::Flat => vec![1.0; d1],
            TestSignal::Spiky => (0..d1).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        };
        return Mat::outer(&a, &a);
    }
    match case.signal {
        TestSignal::Gaussian => crate::matcore::gaussian(rng, d1, d2),
        TestSignal::Flat => Mat::from_fn(d1, d2, |_, _| 1.0),
        TestSignal::Spiky => Mat::from_fn(d1, d2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 }),
    }
}

/// Empirical distribution of `‖A x̄0‖²/σ²_min(A^T)` against the ensemble bounds.
pub fn ensemble_report(cases: &[EnsembleCase], seeds: usize, base_seed: u64) -> Result<Vec<EnsembleRow>> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let pool = thread_pool()?;
    cases
        .iter()
        .enumerate()
        .map(|(ci, case)| {
            if case.kind == EnsembleKind::QuadraticLifted && case.d1 != case.d2 {
                return Err(Error::NotSquare {
                    rows: case.d1,
                    cols: case.d2,
                });
            }
            let draws: Vec<Result<(Option<f64>, Option<f64>)>> = pool.install(|| {
                (0..seeds)
                    .into_par_iter()
                    .map(|s| {
                        let mut rng = Rng::new(derive_seed(base_seed, &[ci as u64, s as u64]));
                        let x0 = test_signal(case, &mut rng);
                        let op = draw(case.kind, case.m, (case.d1, case.d2), &mut rng, case.options)?;
                        match op.stats(&x0) {
                            Ok(st) => Ok((Some(st.ratio), st.coherence)),
                            Err(Error::Degenerate) => Ok((None, op.coherence())),
                            Err(e) => Err(e),
                        }
                    })
                    .collect()
            });
            let draws: Vec<(Option<f64>, Option<f64>)> = draws.into_iter().collect::<Result<_>>()?;
            let n = case.d1 * case.d2;
            let d = case.d1 as f64;
            let quadratic = case.kind == EnsembleKind::QuadraticLifted;
            let bound = (!quadratic).then(|| 2.0 * case.m as f64 / n as f64);
            let mut ratios: Vec<f64> = draws.iter().filter_map(|x| x.0).collect();
            let degenerate = draws.len() - ratios.len();
            let exceed_fraction =
                bound.map(|b| (ratios.iter().filter(|&&r| r > b).count() + degenerate) as f64 / seeds as f64);
            let mut coh: Vec<f64> = draws.iter().filter_map(|x| x.1).collect();
            let coherence_bound = quadratic.then(|| 3.0 * d.ln() / d);
            let coherence_exceed_fraction = coherence_bound
                .filter(|_| !coh.is_empty())
                .map(|b| coh.iter().filter(|&&c| c > b).count() as f64 / coh.len() as f64);
            let c_empirical = (quadratic && !ratios.is_empty()).then(|| {
                let scale = (case.m as f64).sqrt() * d.ln() / d;
                ratios.iter().map(|r| r.sqrt() / scale).fold(0.0, f64::max)
            });
            Ok(EnsembleRow {
                case: *case,
                seeds,
                bound,
                ratio_mean: if ratios.is_empty() {
                    f64::NAN
                } else {
                    ratios.iter().sum::<f64>() / ratios.len() as f64
                },
                ratio_max: ratios.iter().copied().fold(f64::NAN, f64::max),
                ratio_median: median(&mut ratios),
                exceed_fraction,
                degenerate,
                coherence_bound,
                coherence_median: (!coh.is_empty()).then(|| median(&mut coh)),
                coherence_exceed_fraction,
                c_empirical,
            })
        })
        .collect()
}

pub fn render_ensemble_table(rows: &[EnsembleRow]) -> String {
    let mut s = String::from("kind             d1   d2     m  signal    seeds  ratio_med  ratio_max  bound     exceed  coh_med   coh_bound coh_exceed c_emp\n");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        s.push_str(&format!(
            "{:<16} {:>4} {:>4} {:>5}  {:<8} {:>6}  {:>9.4}  {:>9.4}  {:<8}  {:<6}  {:<8}  {:<9} {:<10} {}\n",
            r.case.kind.name(),
            r.case.d1,
            r.case.d2,
            r.case.m,
            format!("{:?}", r.case.signal).to_lowercase(),
            r.seeds,
            r.ratio_median,
            r.ratio_max,
            opt(r.bound),
            opt(r.exceed_fraction),
            opt(r.coherence_median),
            opt(r.coherence_bound),
            opt(r.coherence_exceed_fraction),
            opt(r.c_empirical),
        ));
    }
    s
}

/// One row of the per-norm table: `n κ²` is the structural sample-size scale
/// (`k` for ℓ1 on a k-sparse signal, `rd` for nuclear on rank `r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub kind: NormKind,
    pub kappa: f64,
    pub n_kappa_sq: f64,
    pub lipschitz: f64,
    pub alpha: Option<f64>,
    pub distance_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub objective: ObjectiveSpec,
    pub report: BoundReport,
    pub rows: Vec<NormRow>,
    /// `n ρ²/2`: below this many Gaussian or entry-sampling measurements the
    /// failure certificate holds with high probability (Full cone only).
    pub failure_m: Option<f64>,
    pub text: String,
}

/// κ's, D̄(C), lower and upper bounds and the per-norm table for `x0`.
pub fn bound_report(
    x0: &Mat,
    objective: &ObjectiveSpec,
    ensemble: Option<EnsembleKind>,
    alphas: &AlphaChoice,
    samples: usize,
    rng: &mut Rng,
) -> Result<BoundSummary> {
    let objective = if objective.mode == Mode::MaxRatio && objective.reference.is_none() {
        objective.clone().with_reference(x0)
    } else {
        objective.clone()
    };
    let report = geometry::upper_bound(x0, &objective, alphas, samples, rng)?;
    let n = report.n as f64;
    let rows: Vec<NormRow> = report
        .terms
        .iter()
        .map(|t| NormRow {
            kind: t.kind,
            kappa: t.kappa,
            n_kappa_sq: n * t.kappa * t.kappa,
            lipschitz: t.lipschitz,
            alpha: t.alpha,
            distance_sq: t.distance.map(|v| v * v),
        })
        .collect();
    let failure_m = match ensemble {
        Some(EnsembleKind::Gaussian | EnsembleKind::Rademacher | EnsembleKind::EntrySampling)
            if objective.cone == ConeKind::Full =>
        {
            let rho = measurements::rho_lower_bound(x0, &objective)?;
            Some(n * rho * rho / 2.0)
        }
        _ => None,
    };
    let mut text = format!(
        "objective {}\nn = {}  kappa_min = {:.6}  n*kappa_min^2 = {:.4}  Dbar(C) = {:.6}\n",
        objective.describe(),
        report.n,
        report.kappa_min,
        n * report.kappa_min * report.kappa_min,
        report.dbar_cone
    );
    text.push_str("norm       kappa      n*kappa^2    L          alpha      D^2\n");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in &rows {
        text.push_str(&format!(
            "{:<10} {:<10.6} {:<12.4} {:<10.4} {:<10} {}\n",
            r.kind.name(),
            r.kappa,
            r.n_kappa_sq,
            r.lipschitz,
            opt(r.alpha),
            opt(r.distance_sq)
        ));
    }
    text.push_str(&format!(
        "m_low = {:.4}  (without the factor 1/100: {:.4})\nm_low_weighted = {:.4}\n",
        report.m_low, report.m_low_unscaled, report.m_low_weighted
    ));
    if let Some(m) = report.m_up {
        text.push_str(&format!(
            "m_up = {:.4}  sufficient m (t = 2) = {:.1}\n",
            m,
            report.sufficient_m(2.0).expect("m_up set")
        ));
    }
    if let Some(m) = report.m_up_closed_form {
        text.push_str(&format!("m_up closed form = {m:.4}\n"));
    }
    if let Some(m) = failure_m {
        text.push_str(&format!("certified failure below m = {m:.2}\n"));
    }
    Ok(BoundSummary {
        objective,
        report,
        rows,
        failure_m,
        text,
    })
}

/// Writes cells as CSV to any writer (header included).
pub fn write_cells<W: Write>(cells: &[CellResult], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for c in cells {
        wr.serialize(c)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a signal file: CSV matrix with an optional JSON sidecar.
pub fn load_signal(path: &Path) -> Result<Mat> {
    if crate::constructions::sidecar_path(path).exists() {
        return Ok(crate::constructions::read_signal(path)?.x);
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(File::open(path)?);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{v:?}: {e}"))))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("{}: empty or ragged matrix", path.display())));
    }
    Mat::from_vec(rows.len(), cols, rows.concat())
}
