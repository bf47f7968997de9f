//! Dense linear algebra and seeded randomness.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{haar_orthogonal, solve_spd, sym_eig, Cholesky};
pub use matrix::{axpy, dist_sq, dot, norm_sq, Matrix, Vector};
pub use rng::{derive_seed, label_of, SimRng};

/// `n` i.i.d. standard normal draws.
pub fn randn(rng: &mut SimRng, n: usize) -> Vector {
    rng.randn(n)
}
