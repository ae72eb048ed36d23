//! Low-rank comparators: truncated SVD and its activation-aware variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{random_orthonormal, thin_svd, DenseMatrix};
use crate::whitening::{dewhiten_dictionary, fit_whitener, whiten_weights, WhitenMethod, WhitenTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowRankMode {
    Plain,
    DataAware,
}

/// `W̃ = B·C` with `B` d1×r and `C` r×d2.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactorization {
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub mode: LowRankMode,
    pub r: usize,
}

impl LowRankFactorization {
    pub fn reconstruct(&self) -> DenseMatrix {
        self.b.matmul(&self.c).expect("inner dimension is r")
    }
}

fn check_rank(w: &DenseMatrix, r: usize) -> Result<()> {
    let max = w.rows().min(w.cols());
    if r == 0 || r > max {
        return Err(Error::InvalidRank { rank: r, max });
    }
    Ok(())
}

/// Best rank-`r` factors `B = U_r`, `C = Σ_r V_rᵀ` of `m`.
fn truncate(m: &DenseMatrix, r: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    let svd = thin_svd(m)?;
    let b = svd.u.column_range(0, r);
    let c = DenseMatrix::from_fn(r, m.cols(), |i, j| svd.singular_values[i] * svd.vt[(i, j)]);
    Ok((b, c))
}

pub fn svd_truncate(w: &DenseMatrix, r: usize) -> Result<LowRankFactorization> {
    check_rank(w, r)?;
    let (b, c) = truncate(w, r)?;
    Ok(LowRankFactorization {
        b,
        c,
        mode: LowRankMode::Plain,
        r,
    })
}

/// Truncated SVD of `L·W`, mapped back with `B = L⁻¹U_r`.
pub fn data_aware_lowrank(w: &DenseMatrix, x: &DenseMatrix, r: usize, damping: f64) -> Result<LowRankFactorization> {
    check_rank(w, r)?;
    let t = fit_whitener(x, WhitenMethod::Cholesky, damping)?;
    data_aware_with(&t, w, r)
}

/// [`data_aware_lowrank`] with an already fitted transform.
pub fn data_aware_with(t: &WhitenTransform, w: &DenseMatrix, r: usize) -> Result<LowRankFactorization> {
    check_rank(w, r)?;
    let delta = whiten_weights(t, w)?;
    let (u_r, c) = truncate(&delta, r)?;
    Ok(LowRankFactorization {
        b: dewhiten_dictionary(t, &u_r)?,
        c,
        mode: LowRankMode::DataAware,
        r,
    })
}

pub const PCA_CANDIDATES: usize = 100;

/// Outcome of checking the closed-form PCA solution against its defining
/// properties.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaReport {
    /// `C* = B*ᵀW` within 1e-8.
    pub coefficients_closed_form: bool,
    /// `J(B*, C*) = Σ_{i>r} σ_i²` within 1e-8 relative.
    pub objective_is_tail: bool,
    /// `J(B*, C*) ≤ J(B, BᵀW)` for every random orthonormal candidate.
    pub beats_candidates: bool,
    pub objective: f64,
    pub tail_energy: f64,
    pub best_candidate: f64,
}

impl PcaReport {
    pub fn passed(&self) -> bool {
        self.coefficients_closed_form && self.objective_is_tail && self.beats_candidates
    }
}

pub fn pca_check(w: &DenseMatrix, r: usize, seed: u64) -> Result<PcaReport> {
    check_rank(w, r)?;
    let svd = thin_svd(w)?;
    let lr = svd_truncate(w, r)?;
    let projection = |b: &DenseMatrix| b.transpose().matmul(w).expect("b has d1 rows");
    let objective_of = |b: &DenseMatrix, c: &DenseMatrix| {
        let e = w.sub(&b.matmul(c).expect("inner dimension is r")).expect("same shape");
        e.frobenius_norm().powi(2)
    };

    let scale = w.max_abs().max(f64::MIN_POSITIVE);
    let coefficients_closed_form = projection(&lr.b).max_abs_diff(&lr.c) <= 1e-8 * scale.max(1.0);
    let objective = objective_of(&lr.b, &lr.c);
    let tail_energy: f64 = svd.singular_values[r..].iter().map(|s| s * s).sum();
    let total = w.frobenius_norm().powi(2);
    let objective_is_tail = (objective - tail_energy).abs() <= 1e-8 * tail_energy.max(1e-8 * total).max(f64::MIN_POSITIVE);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_candidate = f64::INFINITY;
    for _ in 0..PCA_CANDIDATES {
        let b = random_orthonormal(w.rows(), r, &mut rng);
        best_candidate = best_candidate.min(objective_of(&b, &projection(&b)));
    }
    let beats_candidates = objective <= best_candidate * (1.0 + 1e-12) + 1e-12 * total;
    Ok(PcaReport {
        coefficients_closed_form,
        objective_is_tail,
        beats_candidates,
        objective,
        tail_energy,
        best_candidate,
    })
}
