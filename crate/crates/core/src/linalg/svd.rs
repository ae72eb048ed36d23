//! Thin singular value decomposition and the rank-1 power-iteration estimate
//! used by the dictionary update.
//!
//! Matrices whose smaller dimension is at most [`JACOBI_MAX_COLS`] go through
//! one-sided (Hestenes) Jacobi; larger ones through Householder
//! bidiagonalization followed by implicit-shift QR on the bidiagonal.
//! Both paths return singular values in non-increasing order and apply the
//! same sign convention: the largest-magnitude entry of every left singular
//! vector is positive (first such entry on ties).

use crate::error::{Error, Result};
use crate::linalg::decomp::orthonormalize_columns;
use crate::linalg::matrix::{dot, norm, DenseMatrix};

pub const JACOBI_MAX_COLS: usize = 64;
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub vt: DenseMatrix,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U_r diag(σ_r) V_rᵀ`.
    pub fn reconstruct(&self, r: usize) -> DenseMatrix {
        let (m, n) = (self.u.rows(), self.vt.cols());
        let r = r.min(self.rank());
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..r)
                .map(|p| self.u[(i, p)] * self.singular_values[p] * self.vt[(p, j)])
                .sum()
        })
    }
}

pub fn thin_svd(a: &DenseMatrix) -> Result<ThinSvd> {
    let (m, n) = a.shape();
    if n > m {
        // Work on the transpose so the column count is the small dimension.
        let t = thin_svd(&a.transpose())?;
        let mut out = ThinSvd {
            u: t.vt.transpose(),
            singular_values: t.singular_values,
            vt: t.u.transpose(),
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    let (u, sigma, v) = if n <= JACOBI_MAX_COLS {
        jacobi(a)?
    } else {
        golub_kahan(a)?
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let mut u_sorted = u.select_columns(&order);
    let singular_values: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    let v_sorted = v.select_columns(&order);
    orthonormalize_columns(&mut u_sorted);
    let mut out = ThinSvd {
        u: u_sorted,
        singular_values,
        vt: v_sorted.transpose(),
    };
    fix_signs(&mut out);
    Ok(out)
}

fn fix_signs(svd: &mut ThinSvd) {
    let (m, k) = svd.u.shape();
    for c in 0..k {
        let mut best = 0usize;
        for r in 1..m {
            if svd.u[(r, c)].abs() > svd.u[(best, c)].abs() {
                best = r;
            }
        }
        if svd.u[(best, c)] < 0.0 {
            for r in 0..m {
                svd.u[(r, c)] = -svd.u[(r, c)];
            }
            for j in 0..svd.vt.cols() {
                svd.vt[(c, j)] = -svd.vt[(c, j)];
            }
        }
    }
}

/// One-sided Jacobi on a tall matrix. Returns unsorted `(U, σ, V)`.
fn jacobi(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = a.shape();
    // Column-major working copies make the rotations contiguous.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let eps = f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            iterations: MAX_SWEEPS,
        });
    }
    let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let u = DenseMatrix::from_fn(m, n, |i, j| {
        if sigma[j] > 0.0 {
            cols[j][i] / sigma[j]
        } else {
            0.0
        }
    });
    Ok((u, sigma, DenseMatrix::from_columns(&v)))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn pythag(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

fn with_sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Golub–Reinsch: Householder bidiagonalization and implicit-shift QR.
/// Requires `rows >= cols`. Returns unsorted `(U, σ, V)`.
fn golub_kahan(input: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = input.shape();
    let mut a = input.clone();
    let mut v = DenseMatrix::zeros(n, n);
    let mut w = vec![0.0; n];
    let mut rv1 = vec![0.0; n];
    let (mut g, mut scale, mut anorm) = (0.0f64, 0.0f64, 0.0f64);
    let mut l = 0usize;

    for i in 0..n {
        l = i + 1;
        rv1[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i < m {
            for k in i..m {
                scale += a[(k, i)].abs();
            }
            if scale != 0.0 {
                let mut s = 0.0;
                for k in i..m {
                    a[(k, i)] /= scale;
                    s += a[(k, i)] * a[(k, i)];
                }
                let f = a[(i, i)];
                g = -with_sign(s.sqrt(), f);
                let h = f * g - s;
                a[(i, i)] = f - g;
                for j in l..n {
                    let s: f64 = (i..m).map(|k| a[(k, i)] * a[(k, j)]).sum();
                    let f = s / h;
                    for k in i..m {
                        a[(k, j)] += f * a[(k, i)];
                    }
                }
                for k in i..m {
                    a[(k, i)] *= scale;
                }
            }
        }
        w[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i < m && i + 1 != n {
            for k in l..n {
                scale += a[(i, k)].abs();
            }
            if scale != 0.0 {
                let mut s = 0.0;
                for k in l..n {
                    a[(i, k)] /= scale;
                    s += a[(i, k)] * a[(i, k)];
                }
                let f = a[(i, l)];
                g = -with_sign(s.sqrt(), f);
                let h = f * g - s;
                a[(i, l)] = f - g;
                for k in l..n {
                    rv1[k] = a[(i, k)] / h;
                }
                for j in l..m {
                    let s: f64 = (l..n).map(|k| a[(j, k)] * a[(i, k)]).sum();
                    for k in l..n {
                        a[(j, k)] += s * rv1[k];
                    }
                }
                for k in l..n {
                    a[(i, k)] *= scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    // Right-hand transformations.
    for i in (0..n).rev() {
        if i + 1 < n {
            if g != 0.0 {
                for j in l..n {
                    v[(j, i)] = (a[(i, j)] / a[(i, l)]) / g;
                }
                for j in l..n {
                    let s: f64 = (l..n).map(|k| a[(i, k)] * v[(k, j)]).sum();
                    for k in l..n {
                        v[(k, j)] += s * v[(k, i)];
                    }
                }
            }
            for j in l..n {
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        }
        v[(i, i)] = 1.0;
        g = rv1[i];
        l = i;
    }

    // Left-hand transformations.
    for i in (0..m.min(n)).rev() {
        let l = i + 1;
        let mut g = w[i];
        for j in l..n {
            a[(i, j)] = 0.0;
        }
        if g != 0.0 {
            g = 1.0 / g;
            for j in l..n {
                let s: f64 = (l..m).map(|k| a[(k, i)] * a[(k, j)]).sum();
                let f = (s / a[(i, i)]) * g;
                for k in i..m {
                    a[(k, j)] += f * a[(k, i)];
                }
            }
            for j in i..m {
                a[(j, i)] *= g;
            }
        } else {
            for j in i..m {
                a[(j, i)] = 0.0;
            }
        }
        a[(i, i)] += 1.0;
    }

    // Diagonalize the bidiagonal form.
    for k in (0..n).rev() {
        let mut its = 0;
        loop {
            let mut flag = true;
            let mut l = k;
            let mut nm = 0;
            loop {
                if rv1[l].abs() + anorm == anorm {
                    flag = false;
                    break;
                }
                nm = l - 1;
                if w[nm].abs() + anorm == anorm {
                    break;
                }
                l -= 1;
            }
            if flag {
                let mut c = 0.0;
                let mut s = 1.0;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] *= c;
                    if f.abs() + anorm == anorm {
                        break;
                    }
                    let g = w[i];
                    let h = pythag(f, g);
                    w[i] = h;
                    let h = 1.0 / h;
                    c = g * h;
                    s = -f * h;
                    for j in 0..m {
                        let y = a[(j, nm)];
                        let z = a[(j, i)];
                        a[(j, nm)] = y * c + z * s;
                        a[(j, i)] = z * c - y * s;
                    }
                }
            }
            let z = w[k];
            if l == k {
                if z < 0.0 {
                    w[k] = -z;
                    for j in 0..n {
                        v[(j, k)] = -v[(j, k)];
                    }
                }
                break;
            }
            its += 1;
            if its >= MAX_SWEEPS {
                return Err(Error::SvdNoConvergence {
                    iterations: MAX_SWEEPS,
                });
            }
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
            g = pythag(f, 1.0);
            f = ((x - z) * (x + z) + h * ((y / (f + with_sign(g, f))) - h)) / x;
            let mut c = 1.0;
            let mut s = 1.0;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                y = w[i];
                h = s * g;
                g *= c;
                let mut z = pythag(f, h);
                rv1[j] = z;
                c = f / z;
                s = h / z;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                for jj in 0..n {
                    let xx = v[(jj, j)];
                    let zz = v[(jj, i)];
                    v[(jj, j)] = xx * c + zz * s;
                    v[(jj, i)] = zz * c - xx * s;
                }
                z = pythag(f, h);
                w[j] = z;
                if z != 0.0 {
                    let zi = 1.0 / z;
                    c = f * zi;
                    s = h * zi;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                for jj in 0..m {
                    let yy = a[(jj, j)];
                    let zz = a[(jj, i)];
                    a[(jj, j)] = yy * c + zz * s;
                    a[(jj, i)] = zz * c - yy * s;
                }
            }
            rv1[l] = 0.0;
            rv1[k] = f;
            w[k] = x;
        }
    }
    Ok((a, w, v))
}

/// Leading singular triple estimated by `iters` rounds of alternating power
/// iteration. The start vector is the largest-norm column of `r`, normalized.
///
/// The returned triple is consistent: `v = Rᵀu / ‖Rᵀu‖` and `σ = ‖Rᵀu‖`, so
/// `σ vᵀ` is the best coefficient row for the atom `u`.
pub fn rank1_svd_power(r: &DenseMatrix, iters: usize) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    if iters == 0 {
        return Err(Error::InvalidConfig("power iterations must be >= 1".into()));
    }
    let (m, n) = r.shape();
    let mut best_col = 0usize;
    let mut best_norm = -1.0;
    for j in 0..n {
        let c = (0..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>();
        if c > best_norm {
            best_norm = c;
            best_col = j;
        }
    }
    if best_norm <= 0.0 {
        return Err(Error::ZeroResidual);
    }
    let mut u = r.col(best_col);
    scale_to_unit(&mut u);
    let mut v = vec![0.0; n];
    for _ in 0..iters {
        v = r.mat_t_vec(&u);
        if scale_to_unit(&mut v) == 0.0 {
            return Err(Error::ZeroResidual);
        }
        u = r.mat_vec(&v);
        if scale_to_unit(&mut u) == 0.0 {
            return Err(Error::ZeroResidual);
        }
    }
    v = r.mat_t_vec(&u);
    let sigma = scale_to_unit(&mut v);
    if sigma == 0.0 {
        return Err(Error::ZeroResidual);
    }
    Ok((u, sigma, v))
}

fn scale_to_unit(v: &mut [f64]) -> f64 {
    let len = norm(v);
    if len > 0.0 {
        for t in v.iter_mut() {
            *t /= len;
        }
    }
    len
}
