#![allow(dead_code)]

use cospadi::linalg::{gaussian_matrix, DenseMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gaussian_matrix(rows, cols, &mut rng(seed))
}

/// Product of random `rows×r` and `r×cols` factors.
pub fn random_rank(rows: usize, cols: usize, r: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    gaussian_matrix(rows, r, rng).matmul(&gaussian_matrix(r, cols, rng)).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

use cospadi::factorizer::{CompressedFactorization, SparseCodes, SparseColumn};
use cospadi::planner::MaskMode;
use rand::Rng;

/// Random codes with between 0 and `s` nonzeros per column.
pub fn random_codes(k: usize, d2: usize, s: usize, rng: &mut ChaCha8Rng) -> SparseCodes {
    let cols = (0..d2)
        .map(|_| {
            let count = rng.random_range(0..=s);
            let mut pairs: Vec<(usize, f64)> = Vec::new();
            while pairs.len() < count {
                let i = rng.random_range(0..k);
                if !pairs.iter().any(|p| p.0 == i) {
                    pairs.push((i, rng.random_range(-3.0..3.0)));
                }
            }
            SparseColumn::normalized(pairs)
        })
        .collect();
    SparseCodes::from_columns(k, s, cols).unwrap()
}

pub fn random_factorization(seed: u64, mode: MaskMode) -> CompressedFactorization {
    let mut g = rng(seed);
    let d1 = g.random_range(1..20);
    let d2 = g.random_range(1..40);
    let k = g.random_range(1..24);
    let s = g.random_range(1..=k);
    let dict = gaussian_matrix(d1, k, &mut g);
    let codes = random_codes(k, d2, s, &mut g);
    CompressedFactorization::new(dict, codes, mode, "layer").unwrap()
}
