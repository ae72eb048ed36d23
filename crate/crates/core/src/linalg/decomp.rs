use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, DenseMatrix};

/// Relative threshold on `|R_jj| / max|X|` below which a column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triangle {
    Lower,
    Upper,
}

/// Thin Householder QR of a tall matrix, `X = Q R` with `Q` of shape
/// `rows × cols` and `R` upper triangular with a non-negative diagonal.
pub fn qr_factor(x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = x.shape();
    if m < n {
        return Err(Error::Shape(format!("QR needs rows >= cols, got {m}x{n}")));
    }
    let scale = x.max_abs();
    let mut a = x.clone();
    // Householder vectors, each stored with its leading offset.
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| a[(i, k)]).collect();
        let alpha = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if alpha <= RANK_TOLERANCE * scale || scale == 0.0 {
            return Err(Error::RankDeficient { column: k });
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * a[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                a[(i, j)] -= s * v[i - k];
            }
        }
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r[(i, j)] = a[(i, j)];
        }
    }
    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = DenseMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..n).rev() {
        let v = &reflectors[k];
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        for j in 0..n {
            let s: f64 = (k..m).map(|i| v[i - k] * q[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                q[(i, j)] -= s * v[i - k];
            }
        }
    }
    // Unique factorization: flip rows of R / columns of Q with negative diagonal.
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for j in i..n {
                r[(i, j)] = -r[(i, j)];
            }
            for row in 0..m {
                q[(row, i)] = -q[(row, i)];
            }
        }
        if r[(i, i)].abs() <= RANK_TOLERANCE * scale {
            return Err(Error::RankDeficient { column: i });
        }
    }
    Ok((q, r))
}

/// Upper-triangular Cholesky factor `C` with `CᵀC = G`.
pub fn cholesky(g: &DenseMatrix) -> Result<DenseMatrix> {
    cholesky_with_floor(g, 0.0)
}

/// Cholesky that rejects pivots at or below `pivot_floor`.
pub(crate) fn cholesky_with_floor(g: &DenseMatrix, pivot_floor: f64) -> Result<DenseMatrix> {
    let (n, m) = g.shape();
    if n != m {
        return Err(Error::Shape(format!("Cholesky needs a square matrix, got {n}x{m}")));
    }
    let scale = g.max_abs().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = g[(j, j)];
        for k in 0..j {
            pivot -= c[(k, j)] * c[(k, j)];
        }
        if pivot <= pivot_floor || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let d = pivot.sqrt();
        c[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(j, i)];
            for k in 0..j {
                s -= c[(k, j)] * c[(k, i)];
            }
            c[(j, i)] = s / d;
        }
    }
    Ok(c)
}

/// Solves `T · X = B` for triangular `T` by substitution.
pub fn solve_triangular(t: &DenseMatrix, b: &DenseMatrix, side: Triangle) -> Result<DenseMatrix> {
    let n = t.rows();
    if t.cols() != n || b.rows() != n {
        return Err(Error::Shape(format!(
            "triangular solve with T {}x{} and B {}x{}",
            t.rows(),
            t.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if let Some(index) = (0..n).find(|&i| t[(i, i)] == 0.0) {
        return Err(Error::SingularTriangular { index });
    }
    let nrhs = b.cols();
    let mut x = b.clone();
    let order: Box<dyn Iterator<Item = usize>> = match side {
        Triangle::Lower => Box::new(0..n),
        Triangle::Upper => Box::new((0..n).rev()),
    };
    for i in order {
        let range = match side {
            Triangle::Lower => 0..i,
            Triangle::Upper => i + 1..n,
        };
        let diag = t[(i, i)];
        for c in 0..nrhs {
            let mut s = x[(i, c)];
            for k in range.clone() {
                s -= t[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / diag;
        }
    }
    Ok(x)
}

/// Solves `X · T = B` for upper-triangular `T`, i.e. returns `B T⁻¹`.
pub fn solve_right_upper(t: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    // (B T⁻¹)ᵀ = T⁻ᵀ Bᵀ with Tᵀ lower triangular.
    Ok(solve_triangular(&t.transpose(), &b.transpose(), Triangle::Lower)?.transpose())
}

/// Modified Gram–Schmidt with one re-orthogonalization pass, completing
/// degenerate columns from the standard basis. Columns are processed in order.
pub(crate) fn orthonormalize_columns(m: &mut DenseMatrix) {
    let (rows, cols) = m.shape();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut next_unit = 0usize;
    for c in 0..cols {
        let mut v = m.col(c);
        let original = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        project_out(&mut v, &basis);
        let mut len = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if original == 0.0 || len < 0.5 * original || len < 1e-300 {
            // Degenerate: take the next standard basis vector that survives projection.
            loop {
                assert!(next_unit < rows, "cannot complete an orthonormal basis");
                v = vec![0.0; rows];
                v[next_unit] = 1.0;
                next_unit += 1;
                project_out(&mut v, &basis);
                len = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                if len > 0.5 {
                    break;
                }
            }
        }
        for t in v.iter_mut() {
            *t /= len;
        }
        m.set_col(c, &v);
        basis.push(v);
    }
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            for (t, &bb) in v.iter_mut().zip(b) {
                *t -= p * bb;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_support::random_matrix;

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert!(a.max_abs_diff(b) <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn qr_identity_cases() {
        let i4 = DenseMatrix::identity(4);
        let (q, r) = qr_factor(&i4).unwrap();
        assert_close(&q, &i4, 1e-15);
        assert_close(&r, &i4, 1e-15);
        let (q, r) = qr_factor(&i4.scale(2.0)).unwrap();
        assert_close(&q, &i4, 1e-15);
        assert_close(&r, &i4.scale(2.0), 1e-15);
    }

    #[test]
    fn qr_random_residuals() {
        let x = random_matrix(64, 8, 11);
        let (q, r) = qr_factor(&x).unwrap();
        assert!(q.gram().max_abs_diff(&DenseMatrix::identity(8)) < 1e-10);
        assert!(q.matmul(&r).unwrap().relative_error(&x) < 1e-10);
        for i in 0..8 {
            assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_reports_dependent_column() {
        let mut x = random_matrix(10, 4, 3);
        let c1 = x.col(1);
        x.set_col(2, &c1.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
        assert_eq!(qr_factor(&x), Err(Error::RankDeficient { column: 2 }));
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky(&DenseMatrix::identity(3).scale(4.0)).unwrap();
        assert_close(&c, &DenseMatrix::identity(3).scale(2.0), 1e-15);
        let g = DenseMatrix::from_diag(&[1.0, 9.0]);
        assert_close(&cholesky(&g).unwrap(), &DenseMatrix::from_diag(&[1.0, 3.0]), 1e-15);

        let x = random_matrix(32, 6, 5);
        let g = x.gram();
        let c = cholesky(&g).unwrap();
        assert!(c.transpose().matmul(&c).unwrap().relative_error(&g) < 1e-9);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let g = DenseMatrix::from_diag(&[1.0, -1.0, 2.0]);
        assert!(matches!(cholesky(&g), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
        let ns = DenseMatrix::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(cholesky(&ns), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn triangular_examples() {
        let b = random_matrix(3, 2, 1);
        let x = solve_triangular(&DenseMatrix::identity(3), &b, Triangle::Upper).unwrap();
        assert_eq!(x, b);
        let t = DenseMatrix::from_diag(&[2.0, 4.0]);
        let b = DenseMatrix::new(2, 1, vec![2.0, 8.0]).unwrap();
        let x = solve_triangular(&t, &b, Triangle::Lower).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
        let t = DenseMatrix::from_diag(&[1.0, 0.0]);
        assert_eq!(
            solve_triangular(&t, &b, Triangle::Upper),
            Err(Error::SingularTriangular { index: 1 })
        );
    }

    #[test]
    fn triangular_random_residual() {
        for side in [Triangle::Lower, Triangle::Upper] {
            let mut t = random_matrix(8, 8, 21);
            for i in 0..8 {
                for j in 0..8 {
                    let keep = match side {
                        Triangle::Lower => j <= i,
                        Triangle::Upper => j >= i,
                    };
                    if !keep {
                        t[(i, j)] = 0.0;
                    }
                }
                t[(i, i)] += if t[(i, i)] >= 0.0 { 4.0 } else { -4.0 };
            }
            let b = random_matrix(8, 3, 22);
            let x = solve_triangular(&t, &b, side).unwrap();
            assert!(t.matmul(&x).unwrap().relative_error(&b) < 1e-10);
        }
        let t = {
            let mut t = random_matrix(5, 5, 2);
            for i in 0..5 {
                for j in 0..i {
                    t[(i, j)] = 0.0;
                }
                t[(i, i)] = 3.0 + t[(i, i)].abs();
            }
            t
        };
        let b = random_matrix(7, 5, 9);
        let x = solve_right_upper(&t, &b).unwrap();
        assert!(x.matmul(&t).unwrap().relative_error(&b) < 1e-12);
    }

    #[test]
    fn orthonormalize_completes_zero_columns() {
        let mut m = DenseMatrix::zeros(4, 3);
        m[(0, 0)] = 2.0;
        orthonormalize_columns(&mut m);
        assert!(m.gram().max_abs_diff(&DenseMatrix::identity(3)) < 1e-14);
        assert_eq!(m.col(0), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
