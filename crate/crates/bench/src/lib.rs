//! Fixtures shared by the benchmarks.

use simrec::constructions::SignalTemplate;
use simrec::matcore::{gaussian, Mat, Rng};
use simrec::measurements::{draw, DrawOptions, EnsembleKind, MeasurementOperator};

/// Symmetric Gaussian matrix, the typical input of a PSD projection.
pub fn symmetric(d: usize, seed: u64) -> Mat {
    let g = gaussian(&mut Rng::new(seed), d, d);
    (&g + &g.transpose()).scale(0.5)
}

/// Rank-one PSD sparse signal with `m` Gaussian measurements of it.
pub struct Instance {
    pub x0: Mat,
    pub op: MeasurementOperator,
    pub b: Vec<f64>,
}

pub fn psd_instance(d: usize, k: usize, m: usize, seed: u64) -> Instance {
    let mut rng = Rng::new(seed);
    let x0 = SignalTemplate::Slr {
        k,
        r: 1,
        psd: true,
        random_placement: true,
    }
    .generate(d, &mut rng)
    .expect("valid template")
    .x;
    let op = draw(EnsembleKind::Gaussian, m, x0.shape(), &mut rng, DrawOptions::default()).expect("valid draw");
    let b = op.apply(&x0).expect("shapes agree");
    Instance { x0, op, b }
}
