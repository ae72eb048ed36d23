//! Calibration transform `L` with `Y = X L⁻¹` column-orthonormal.
//!
//! Because `‖X A‖_F = ‖L A‖_F` for any `A`, the activation-space objective
//! `‖XW − X D S‖_F` becomes the plain Frobenius objective `‖LW − (LD) S‖_F`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_with_floor, qr_factor, solve_right_upper, solve_triangular, DenseMatrix, Triangle,
};

/// Rows of `X` folded into the Gram matrix per block.
const GRAM_BLOCK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitenMethod {
    Qr,
    #[default]
    Cholesky,
}

impl std::str::FromStr for WhitenMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qr" => Ok(Self::Qr),
            "cholesky" => Ok(Self::Cholesky),
            other => Err(Error::InvalidConfig(format!("unknown whitening method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenTransform {
    l: DenseMatrix,
    method: WhitenMethod,
    damping: f64,
    source_rows: usize,
}

impl WhitenTransform {
    /// The upper-triangular transform `L`.
    pub fn matrix(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn method(&self) -> WhitenMethod {
        self.method
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `Y = X L⁻¹`.
    pub fn whiten_inputs(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "calibration has {} columns, transform expects {}",
                x.cols(),
                self.dim()
            )));
        }
        solve_right_upper(&self.l, x)
    }
}

/// `XᵀX` accumulated over row blocks.
pub fn gram_blocked(x: &DenseMatrix) -> DenseMatrix {
    let (n, d) = x.shape();
    let mut g = DenseMatrix::zeros(d, d);
    let mut start = 0;
    while start < n {
        let end = (start + GRAM_BLOCK_ROWS).min(n);
        for r in start..end {
            let row = x.row(r);
            for i in 0..d {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..d {
                    g[(i, j)] += a * row[j];
                }
            }
        }
        start = end;
    }
    for i in 0..d {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

pub fn fit_whitener(x: &DenseMatrix, method: WhitenMethod, damping: f64) -> Result<WhitenTransform> {
    if !(damping >= 0.0 && damping.is_finite()) {
        return Err(Error::InvalidConfig(format!("damping must be >= 0, got {damping}")));
    }
    let (n, d) = x.shape();
    if damping == 0.0 && n < d {
        return Err(Error::RankDeficient { column: n });
    }
    let l = match method {
        WhitenMethod::Cholesky => {
            let mut g = gram_blocked(x);
            let mean_diag = (0..d).map(|i| g[(i, i)]).sum::<f64>() / d as f64;
            if damping > 0.0 {
                for i in 0..d {
                    g[(i, i)] += damping * mean_diag;
                }
            }
            // Pivots within rounding noise of zero mean X is numerically rank deficient.
            let max_diag = (0..d).map(|i| g[(i, i)]).fold(0.0, f64::max);
            let floor = if damping > 0.0 {
                0.0
            } else {
                d as f64 * f64::EPSILON * max_diag
            };
            cholesky_with_floor(&g, floor).map_err(|e| match e {
                Error::NotPositiveDefinite { pivot, .. } => Error::RankDeficient { column: pivot },
                other => other,
            })?
        }
        WhitenMethod::Qr => {
            let stacked;
            let target = if damping > 0.0 {
                // R of [X; sqrt(λ·mean diag) I] equals chol(XᵀX + λ·mean diag·I).
                let mean_diag = x.as_slice().iter().map(|v| v * v).sum::<f64>() / d as f64;
                let ridge = DenseMatrix::identity(d).scale((damping * mean_diag).sqrt());
                stacked = DenseMatrix::vstack(&[x, &ridge])?;
                &stacked
            } else {
                x
            };
            qr_factor(target)?.1
        }
    };
    Ok(WhitenTransform {
        l,
        method,
        damping,
        source_rows: n,
    })
}

/// `W_L = L·W`.
pub fn whiten_weights(t: &WhitenTransform, w: &DenseMatrix) -> Result<DenseMatrix> {
    if w.rows() != t.dim() {
        return Err(Error::Shape(format!(
            "weights have {} rows, transform expects {}",
            w.rows(),
            t.dim()
        )));
    }
    t.l.matmul(w)
}

/// `D_a = L⁻¹·D_L`, by back substitution.
pub fn dewhiten_dictionary(t: &WhitenTransform, d_l: &DenseMatrix) -> Result<DenseMatrix> {
    solve_triangular(&t.l, d_l, Triangle::Upper)
}
