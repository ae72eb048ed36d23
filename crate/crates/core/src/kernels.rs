//! Applying factorized weights to activations, with exact multiplication counts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factorizer::{CompressedFactorization, SparseCodes};
use crate::linalg::DenseMatrix;

const ROW_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MultiplyCount {
    pub inner_product_mults: u64,
    pub combination_mults: u64,
    pub total: u64,
    pub k_active: usize,
}

impl MultiplyCount {
    fn new(inner: u64, combination: u64, k_active: usize) -> Self {
        Self {
            inner_product_mults: inner,
            combination_mults: combination,
            total: inner + combination,
            k_active,
        }
    }
}

/// Union of all column supports, ascending.
pub fn active_atoms(codes: &SparseCodes) -> Vec<usize> {
    let mut used = vec![false; codes.k()];
    for (atoms, _) in codes.columns() {
        for &i in atoms {
            used[i] = true;
        }
    }
    (0..codes.k()).filter(|&i| used[i]).collect()
}

/// `Y = X·D·S` evaluated as `P = X·D[:, U]` over the active atoms `U`, then
/// `Y[:, j] = Σ S[i, j]·P[:, i]`.
pub fn apply_compressed(
    x: &DenseMatrix,
    dictionary: &DenseMatrix,
    codes: &SparseCodes,
) -> Result<(DenseMatrix, MultiplyCount)> {
    if x.cols() != dictionary.rows() {
        return Err(Error::Shape(format!(
            "activations have {} features, dictionary has {} rows",
            x.cols(),
            dictionary.rows()
        )));
    }
    if dictionary.cols() != codes.k() {
        return Err(Error::Shape(format!(
            "dictionary has {} atoms, codes reference {}",
            dictionary.cols(),
            codes.k()
        )));
    }
    let (n, d1, d2) = (x.rows(), x.cols(), codes.d2());
    let active = active_atoms(codes);
    let mut slot = vec![usize::MAX; codes.k()];
    for (p, &i) in active.iter().enumerate() {
        slot[i] = p;
    }
    // Active atoms as contiguous rows, so each inner product is a slice dot.
    let atoms: Vec<Vec<f64>> = active.iter().map(|&i| dictionary.col(i)).collect();
    let ka = active.len();

    let mut out = vec![0.0; n * d2];
    out.par_chunks_mut(ROW_BLOCK * d2.max(1))
        .enumerate()
        .for_each(|(block, y)| {
            let start = block * ROW_BLOCK;
            let rows = y.len().checked_div(d2).unwrap_or(0);
            let mut p = vec![0.0; ka];
            for r in 0..rows {
                let xr = x.row(start + r);
                for (pv, atom) in p.iter_mut().zip(&atoms) {
                    *pv = xr.iter().zip(atom).map(|(a, b)| a * b).sum();
                }
                let yr = &mut y[r * d2..(r + 1) * d2];
                for (j, yv) in yr.iter_mut().enumerate() {
                    let (support, values) = codes.column(j);
                    let mut acc = 0.0;
                    for (&i, &v) in support.iter().zip(values) {
                        acc += v * p[slot[i]];
                    }
                    *yv = acc;
                }
            }
        });
    let count = MultiplyCount::new(
        (n * d1 * ka) as u64,
        (n * codes.nnz()) as u64,
        ka,
    );
    Ok((DenseMatrix::from_vec_unchecked(n, d2, out), count))
}

pub fn apply_factorization(x: &DenseMatrix, cf: &CompressedFactorization) -> Result<(DenseMatrix, MultiplyCount)> {
    apply_compressed(x, &cf.dictionary, &cf.codes)
}

/// `Y = (X·B)·C`.
pub fn apply_lowrank(x: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<(DenseMatrix, MultiplyCount)> {
    if b.cols() != c.rows() {
        return Err(Error::Shape(format!(
            "factors are {}x{} and {}x{}",
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols()
        )));
    }
    let xb = x.matmul(b)?;
    let y = xb.matmul(c)?;
    let (n, d1, r, d2) = (x.rows() as u64, b.rows() as u64, b.cols() as u64, c.cols() as u64);
    Ok((y, MultiplyCount::new(n * d1 * r, n * r * d2, 0)))
}

/// `N·d1·k + N·s·d2` for real-valued sizes, assuming every atom is active
/// and every column holds `s` nonzeros.
pub fn sparse_multiplies(n: f64, d1: f64, d2: f64, k: f64, s: f64) -> f64 {
    n * d1 * k + n * s * d2
}

/// `N·r·(d1 + d2)`.
pub fn lowrank_multiplies(n: f64, d1: f64, d2: f64, r: f64) -> f64 {
    n * r * (d1 + d2)
}
