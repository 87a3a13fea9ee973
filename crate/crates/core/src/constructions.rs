//! Signal generators: planted Gaussian S&L matrices, Hadamard-based matrices
//! with near-maximal `κ`, and sparse phase-retrieval instances `aa^T`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::support_rectangle;
use crate::matcore::{gaussian, svd, Mat, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    TopLeft,
    Random(u64),
}

/// `d1 x d2` matrix whose nonzeros fit in a `k1 x k2` submatrix of rank `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlrSpec {
    pub d1: usize,
    pub d2: usize,
    pub k1: usize,
    pub k2: usize,
    pub r: usize,
    #[serde(default)]
    pub psd: bool,
    #[serde(default)]
    pub placement: Placement,
}

impl SlrSpec {
    pub fn square(d: usize, k: usize, r: usize, psd: bool) -> SlrSpec {
        SlrSpec {
            d1: d,
            d2: d,
            k1: k,
            k2: k,
            r,
            psd,
            placement: Placement::TopLeft,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::SpecInvalid(msg.to_string()));
        if self.r == 0 || self.k1 == 0 || self.k2 == 0 {
            return bad("r, k1, k2 must be positive");
        }
        if self.r > self.k1.min(self.k2) {
            return bad("rank exceeds the support size");
        }
        if self.k1 > self.d1 || self.k2 > self.d2 {
            return bad("support exceeds the matrix size");
        }
        if self.psd && (self.d1 != self.d2 || self.k1 != self.k2) {
            return bad("psd signals need d1 = d2 and k1 = k2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonzeros {
    #[default]
    Sign,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "generator")]
pub enum SignalOrigin {
    Planted {
        spec: SlrSpec,
    },
    Hadamard {
        k1: usize,
        k2: usize,
        r: usize,
        d1: usize,
        d2: usize,
    },
    PhaseRetrieval {
        d: usize,
        k: usize,
        nonzeros: Nonzeros,
    },
    External,
}

/// JSON sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMeta {
    #[serde(flatten)]
    pub origin: SignalOrigin,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `‖ā‖₁` of the unlifted vector, for phase retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_bar_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSignal {
    pub x: Mat,
    /// Nonzero rows and columns.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub rank: usize,
    pub meta: SignalMeta,
}

/// Numerical rank at relative tolerance `1e-9`.
pub fn numerical_rank(x: &Mat) -> Result<usize> {
    let s = svd(x)?.s;
    let top = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&v| v > 1e-9 * top).count())
}

fn embed(block: &Mat, d1: usize, d2: usize, rows: &[usize], cols: &[usize]) -> Mat {
    let mut x = Mat::zeros(d1, d2);
    for (i, &ri) in rows.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            x[(ri, cj)] = block[(i, j)];
        }
    }
    x
}

fn placement_indices(spec: &SlrSpec) -> (Vec<usize>, Vec<usize>) {
    match spec.placement {
        Placement::TopLeft => ((0..spec.k1).collect(), (0..spec.k2).collect()),
        Placement::Random(seed) => {
            let mut r = Rng::new(seed);
            let rows = r.subset(spec.d1, spec.k1);
            let cols = if spec.psd {
                rows.clone()
            } else {
                r.subset(spec.d2, spec.k2)
            };
            (rows, cols)
        }
    }
}

/// `G G^T` (PSD) or `G1 G2^T` with Gaussian factors, embedded at the placement.
pub fn planted_gaussian(spec: &SlrSpec, rng: &mut Rng) -> Result<StructuredSignal> {
    spec.validate()?;
    let seed = rng.split();
    let mut r = Rng::new(seed);
    let (rows, cols) = placement_indices(spec);
    for _ in 0..10 {
        let block = if spec.psd {
            let g = gaussian(&mut r, spec.k1, spec.r);
            g.matmul_t(&g).symmetrize()
        } else {
            gaussian(&mut r, spec.k1, spec.r).matmul_t(&gaussian(&mut r, spec.k2, spec.r))
        };
        let x = embed(&block, spec.d1, spec.d2, &rows, &cols);
        let (rr, cc) = support_rectangle(&x);
        let rank = numerical_rank(&x)?;
        if rr == rows && cc == cols && rank == spec.r {
            return Ok(StructuredSignal {
                x,
                rows,
                cols,
                rank,
                meta: SignalMeta {
                    origin: SignalOrigin::Planted { spec: *spec },
                    seed: Some(seed),
                    a_bar_l1: None,
                },
            });
        }
    }
    Err(Error::SpecInvalid(
        "could not realize the requested rank and support".into(),
    ))
}

/// Sylvester Hadamard matrix of order `2^p`.
pub fn sylvester(p: u32) -> Mat {
    let mut h = Mat::from_rows(&[&[1.0]]);
    for _ in 0..p {
        let n = h.rows();
        let mut next = Mat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let v = h[(i, j)];
                next[(i, j)] = v;
                next[(i, j + n)] = v;
                next[(i + n, j)] = v;
                next[(i + n, j + n)] = -v;
            }
        }
        h = next;
    }
    h
}

/// Row `i` of the `k1 x k2` block is row `i mod r` of `H_{⌊log2 k2⌋}`, zero padded;
/// the block sits top-left in `d1 x d2`.
pub fn hadamard_slr(k1: usize, k2: usize, r: usize, d1: usize, d2: usize) -> Result<StructuredSignal> {
    if r == 0 || !(k2 >= k1 && k1 >= r) {
        return Err(Error::SpecInvalid("need k2 >= k1 >= r >= 1".into()));
    }
    if d1 < k1 || d2 < k2 {
        return Err(Error::SpecInvalid("support exceeds the matrix size".into()));
    }
    let p = k2.ilog2();
    let h = sylvester(p);
    let width = h.cols();
    if r > width {
        return Err(Error::SpecInvalid(format!("rank {r} exceeds Hadamard order {width}")));
    }
    let mut x = Mat::zeros(d1, d2);
    for i in 0..k1 {
        for j in 0..width {
            x[(i, j)] = h[(i % r, j)];
        }
    }
    let (rows, cols) = support_rectangle(&x);
    let rank = numerical_rank(&x)?;
    Ok(StructuredSignal {
        x,
        rows,
        cols,
        rank,
        meta: SignalMeta {
            origin: SignalOrigin::Hadamard { k1, k2, r, d1, d2 },
            seed: None,
            a_bar_l1: None,
        },
    })
}

/// `X0 = a a^T` with `a` k-sparse; returns the lifted signal and `a`.
pub fn phase_retrieval_instance(
    d: usize,
    k: usize,
    nonzeros: Nonzeros,
    rng: &mut Rng,
) -> Result<(StructuredSignal, Vec<f64>)> {
    if k == 0 || k > d {
        return Err(Error::SpecInvalid(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let seed = rng.split();
    let mut r = Rng::new(seed);
    let mut a = vec![0.0; d];
    for i in r.subset(d, k) {
        a[i] = match nonzeros {
            Nonzeros::Sign => r.sign(),
            Nonzeros::Gaussian => r.normal(),
        };
    }
    let mut s = lift(&a);
    s.meta = SignalMeta {
        origin: SignalOrigin::PhaseRetrieval { d, k, nonzeros },
        seed: Some(seed),
        a_bar_l1: s.meta.a_bar_l1,
    };
    Ok((s, a))
}

/// `a a^T` for a given vector, recording `‖ā‖₁`.
pub fn lift(a: &[f64]) -> StructuredSignal {
    let x = Mat::outer(a, a);
    let (rows, cols) = support_rectangle(&x);
    let nrm = crate::matcore::norm2(a);
    let l1 = a.iter().map(|v| v.abs()).sum::<f64>() / nrm;
    StructuredSignal {
        rank: usize::from(nrm > 0.0),
        x,
        rows,
        cols,
        meta: SignalMeta {
            origin: SignalOrigin::External,
            seed: None,
            a_bar_l1: Some(l1),
        },
    }
}

/// Scale `min{‖ā‖₁⁴, d}` of the quadratic-measurement failure bound.
pub fn phase_retrieval_bound_scale(a_bar_l1: f64, d: usize) -> f64 {
    a_bar_l1.powi(4).min(d as f64)
}

/// Generator template over the grid dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SignalTemplate {
    /// Square `d x d` planted signal with a `k x k` support of rank `r`.
    Slr {
        k: usize,
        r: usize,
        #[serde(default)]
        psd: bool,
        #[serde(default)]
        random_placement: bool,
    },
    /// `k`-sparse vector of length `d` (a `d x 1` signal).
    SparseVector {
        k: usize,
        #[serde(default)]
        nonzeros: Nonzeros,
    },
    PhaseRetrieval {
        k: usize,
        #[serde(default)]
        nonzeros: Nonzeros,
    },
}

impl SignalTemplate {
    pub fn shape(&self, d: usize) -> (usize, usize) {
        match self {
            SignalTemplate::SparseVector { .. } => (d, 1),
            _ => (d, d),
        }
    }

    pub fn generate(&self, d: usize, rng: &mut Rng) -> Result<StructuredSignal> {
        match *self {
            SignalTemplate::Slr {
                k,
                r,
                psd,
                random_placement,
            } => {
                let mut spec = SlrSpec::square(d, k, r, psd);
                if random_placement {
                    spec.placement = Placement::Random(rng.split());
                }
                planted_gaussian(&spec, rng)
            }
            SignalTemplate::SparseVector { k, nonzeros } => {
                if k == 0 || k > d {
                    return Err(Error::SpecInvalid(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
                }
                let seed = rng.split();
                let mut r = Rng::new(seed);
                let mut v = vec![0.0; d];
                for i in r.subset(d, k) {
                    v[i] = match nonzeros {
                        Nonzeros::Sign => r.sign(),
                        Nonzeros::Gaussian => r.normal(),
                    };
                }
                let x = Mat::col_vector(&v);
                let (rows, cols) = support_rectangle(&x);
                Ok(StructuredSignal {
                    x,
                    rows,
                    cols,
                    rank: 1,
                    meta: SignalMeta {
                        origin: SignalOrigin::External,
                        seed: Some(seed),
                        a_bar_l1: None,
                    },
                })
            }
            SignalTemplate::PhaseRetrieval { k, nonzeros } => {
                phase_retrieval_instance(d, k, nonzeros, rng).map(|(s, _)| s)
            }
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Dense CSV (one matrix row per record) plus `<path>.json` with the metadata.
pub fn write_signal(path: &Path, signal: &StructuredSignal) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..signal.x.rows() {
        w.write_record(signal.x.row(i).iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&signal.meta)?)?;
    Ok(())
}

/// Reads a dense CSV signal; the sidecar is optional.
pub fn read_signal(path: &Path) -> Result<StructuredSignal> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
                })
                .collect::<Result<_>>()?,
        );
    }
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || cols == 0 {
        return Err(Error::Parse(format!("{}: empty signal", path.display())));
    }
    let x = Mat::from_vec(rows.len(), cols, rows.concat())?;
    let meta = match fs::read_to_string(sidecar_path(path)) {
        Ok(s) => serde_json::from_str(&s)?,
        Err(_) => SignalMeta {
            origin: SignalOrigin::External,
            seed: None,
            a_bar_l1: None,
        },
    };
    let (r, c) = support_rectangle(&x);
    let rank = numerical_rank(&x)?;
    Ok(StructuredSignal {
        x,
        rows: r,
        cols: c,
        rank,
        meta,
    })
}
