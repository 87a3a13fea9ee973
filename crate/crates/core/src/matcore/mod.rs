//! Dense linear algebra and seeded randomness at desk scale (dimensions up to
//! a few hundred).

mod eig;
mod lstsq;
mod mat;
mod rng;
mod svd;

pub use eig::{sym_eig, sym_eig_with, EigMethod, SymEig};
pub use lstsq::{lstsq_min_norm, MinNormSolver};
pub use mat::{axpy, dot, norm2, Mat};
pub use rng::{derive_seed, gaussian, rademacher, Rng};
pub use svd::{max_singular, min_singular, svd, SvdResult, RANK_TOL};
