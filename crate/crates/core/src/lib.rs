//! Recovery of simultaneously structured signals (sparse and low-rank matrices)
//! from linear measurements.
//!
//! Modules, bottom-up: [`matcore`] (dense linear algebra, seeded RNG),
//! [`norms`] (the four structure norms), [`geometry`] (correlations, cones,
//! sample-complexity bounds), [`measurements`] (ensembles and failure
//! certificates), [`constructions`] (signal generators), [`solvers`]
//! (convex ADMM programs and the rank-1 nonconvex oracle) and [`harness`]
//! (phase-transition grids and reports).

// `!(x > 0.0)` is how argument checks reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constructions;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod matcore;
pub mod measurements;
pub mod norms;
pub mod solvers;

pub use error::{Error, Result};
pub use matcore::{Mat, Rng};
