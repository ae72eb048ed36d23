mod common;

use common::{random, rel_close, rng};
use cospadi::factorizer::{compress_layer, CompressOptions, SparseCodes, SparseColumn};
use cospadi::linalg::DenseMatrix;
use cospadi::planner::{plan_sparse, MaskMode};
use cospadi::whitening::{dewhiten_dictionary, fit_whitener, gram_blocked, whiten_weights, WhitenMethod};
use cospadi::Error;
use rand::Rng;

fn random_codes(k: usize, d2: usize, s: usize, seed: u64) -> SparseCodes {
    let mut g = rng(seed);
    let cols = (0..d2)
        .map(|_| {
            let mut pairs: Vec<(usize, f64)> = Vec::new();
            while pairs.len() < s {
                let i = g.random_range(0..k);
                if !pairs.iter().any(|p| p.0 == i) {
                    pairs.push((i, g.random_range(-2.0..2.0)));
                }
            }
            SparseColumn::normalized(pairs)
        })
        .collect();
    SparseCodes::from_columns(k, s, cols).unwrap()
}

#[test]
fn activation_and_whitened_objectives_coincide() {
    for seed in 0..30 {
        let (n, d1, d2, k, s) = (50, 8, 14, 6, 2);
        let x = random(n, d1, seed);
        let w = random(d1, d2, seed + 100);
        let d_l = random(d1, k, seed + 200);
        let codes = random_codes(k, d2, s, seed);
        for method in [WhitenMethod::Cholesky, WhitenMethod::Qr] {
            let t = fit_whitener(&x, method, 0.0).unwrap();
            let w_l = whiten_weights(&t, &w).unwrap();
            let d_a = dewhiten_dictionary(&t, &d_l).unwrap();
            let whitened = w_l.sub(&codes.reconstruct(&d_l).unwrap()).unwrap().frobenius_norm();
            let activation = x
                .matmul(&w.sub(&codes.reconstruct(&d_a).unwrap()).unwrap())
                .unwrap()
                .frobenius_norm();
            assert!(rel_close(whitened, activation, 1e-7), "seed {seed} {method:?}");
        }
    }
}

#[test]
fn qr_and_cholesky_agree() {
    for seed in 0..20 {
        let x = random(40, 9, seed);
        let a = fit_whitener(&x, WhitenMethod::Cholesky, 0.0).unwrap();
        let b = fit_whitener(&x, WhitenMethod::Qr, 0.0).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-8 * a.matrix().max_abs());
        let damped_a = fit_whitener(&x, WhitenMethod::Cholesky, 1e-3).unwrap();
        let damped_b = fit_whitener(&x, WhitenMethod::Qr, 1e-3).unwrap();
        assert!(damped_a.matrix().max_abs_diff(damped_b.matrix()) < 1e-8 * damped_a.matrix().max_abs());
    }
}

#[test]
fn whitened_inputs_are_orthonormal() {
    let x = random(300, 12, 5);
    let t = fit_whitener(&x, WhitenMethod::Cholesky, 0.0).unwrap();
    let y = t.whiten_inputs(&x).unwrap();
    assert!(y.gram().max_abs_diff(&DenseMatrix::identity(12)) < 1e-9);
    assert!(gram_blocked(&x).relative_error(&x.gram()) < 1e-13);
}

#[test]
fn uniform_calibration_scaling_leaves_the_product_unchanged() {
    let x = random(60, 8, 1);
    let w = random(8, 20, 2);
    let plan = plan_sparse(8, 20, 0.3, 2.0, MaskMode::NoMask).unwrap();
    let opts = CompressOptions::default();
    let a = compress_layer(&w, &x, &plan, &opts).unwrap();
    let b = compress_layer(&w, &x.scale(3.0), &plan, &opts).unwrap();
    let ta = fit_whitener(&x, WhitenMethod::Cholesky, 0.0).unwrap();
    let tb = fit_whitener(&x.scale(3.0), WhitenMethod::Cholesky, 0.0).unwrap();
    assert!(tb.matrix().max_abs_diff(&ta.matrix().scale(3.0)) < 1e-10);
    let (pa, pb) = (a.factorization.reconstruct(), b.factorization.reconstruct());
    assert!(pa.max_abs_diff(&pb) < 1e-8 * pa.max_abs());
}

#[test]
fn rank_deficiency_needs_damping() {
    let base = random(30, 5, 7);
    let x = DenseMatrix::hstack(&[&base, &base.column_range(0, 1)]).unwrap();
    assert!(matches!(
        fit_whitener(&x, WhitenMethod::Cholesky, 0.0),
        Err(Error::RankDeficient { .. })
    ));
    assert!(matches!(fit_whitener(&x, WhitenMethod::Qr, 0.0), Err(Error::RankDeficient { .. })));
    assert!(fit_whitener(&x, WhitenMethod::Cholesky, 1e-6).is_ok());
    assert!(matches!(
        fit_whitener(&random(3, 5, 1), WhitenMethod::Cholesky, 0.0),
        Err(Error::RankDeficient { .. })
    ));
}
