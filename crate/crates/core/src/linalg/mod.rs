//! Dense linear-algebra primitives shared by every other module.

mod decomp;
mod matrix;
mod svd;

pub use decomp::{cholesky, qr_factor, solve_right_upper, solve_triangular, Triangle, RANK_TOLERANCE};
pub(crate) use decomp::cholesky_with_floor;
pub use matrix::{dot, norm, DenseMatrix};
pub use svd::{rank1_svd_power, thin_svd, ThinSvd, JACOBI_MAX_COLS, MAX_SWEEPS};

use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Matrix with orthonormal columns drawn from the Haar measure (QR of a Gaussian).
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    assert!(cols <= rows);
    loop {
        let g = gaussian_matrix(rows, cols, rng);
        if let Ok((q, _)) = qr_factor(&g) {
            return q;
        }
    }
}
