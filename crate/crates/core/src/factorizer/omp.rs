use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factorizer::codes::{Dictionary, SparseCodes, SparseColumn};
use crate::linalg::{dot, norm, DenseMatrix};

/// Relative residual norm at which pursuit stops early.
pub const RESIDUAL_STOP: f64 = 1e-12;
/// Relative norm of an atom's component outside the selected span below
/// which the atom counts as linearly dependent and is skipped.
pub const DEPENDENCE_TOL: f64 = 1e-12;

/// Orthogonal matching pursuit over a fixed dictionary.
///
/// Holds the atoms column-major with their norms so that encoding many
/// columns against the same dictionary does not re-derive them.
pub struct OmpEncoder {
    atoms: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl OmpEncoder {
    pub fn new(dictionary: &DenseMatrix) -> Self {
        let atoms: Vec<Vec<f64>> = (0..dictionary.cols()).map(|i| dictionary.col(i)).collect();
        let norms = atoms.iter().map(|a| norm(a)).collect();
        Self { atoms, norms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, Vec::len)
    }

    /// Greedy selection by normalized correlation (lowest index on ties),
    /// least-squares refit on the selected set after every pick.
    pub fn encode(&self, w: &[f64], s: usize) -> SparseColumn {
        let k = self.atoms.len();
        let w_norm = norm(w);
        if w_norm == 0.0 || s == 0 {
            return SparseColumn::default();
        }
        let mut residual = w.to_vec();
        let mut blocked = vec![false; k];
        for (i, &n) in self.norms.iter().enumerate() {
            blocked[i] = n == 0.0;
        }
        let mut selected: Vec<usize> = Vec::with_capacity(s);
        // Orthonormal basis of the selected span and the triangular factor
        // relating it to the selected atoms (column i of R in r_cols[i]).
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut proj: Vec<f64> = Vec::with_capacity(s);

        while selected.len() < s.min(k) && norm(&residual) >= RESIDUAL_STOP * w_norm {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..k {
                if blocked[i] {
                    continue;
                }
                let c = dot(&residual, &self.atoms[i]).abs() / self.norms[i];
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((i, c));
                }
            }
            let Some((pick, corr)) = best else { break };
            if corr == 0.0 {
                break;
            }
            blocked[pick] = true;

            let mut v = self.atoms[pick].clone();
            let mut coeffs = vec![0.0; basis.len()];
            for _ in 0..2 {
                for (c, q) in coeffs.iter_mut().zip(&basis) {
                    let p = dot(&v, q);
                    *c += p;
                    for (t, &qq) in v.iter_mut().zip(q) {
                        *t -= p * qq;
                    }
                }
            }
            let v_norm = norm(&v);
            if v_norm <= DEPENDENCE_TOL * self.norms[pick] {
                continue;
            }
            v.iter_mut().for_each(|t| *t /= v_norm);
            coeffs.push(v_norm);
            let z = dot(&residual, &v);
            for (t, &q) in residual.iter_mut().zip(&v) {
                *t -= z * q;
            }
            selected.push(pick);
            basis.push(v);
            r_cols.push(coeffs);
            proj.push(z);
        }

        // Back substitution R x = Qᵀ w.
        let n = selected.len();
        let mut x = proj;
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= r_cols[j][i] * x[j];
            }
            x[i] = acc / r_cols[i][i];
        }
        SparseColumn::normalized(selected.into_iter().zip(x).collect())
    }
}

pub fn omp_encode(dictionary: &Dictionary, w: &[f64], s: usize) -> Result<SparseColumn> {
    if w.len() != dictionary.dim() {
        return Err(Error::Shape(format!(
            "column has {} entries, dictionary atoms have {}",
            w.len(),
            dictionary.dim()
        )));
    }
    if s == 0 || s > dictionary.len() {
        return Err(Error::InvalidConfig(format!(
            "sparsity {s} must be in 1..={}",
            dictionary.len()
        )));
    }
    Ok(OmpEncoder::new(&dictionary.atoms).encode(w, s))
}

/// Encodes every column of `w_l` independently. Columns run in parallel;
/// the output is independent of scheduling.
pub fn sparse_code_all(dictionary: &Dictionary, w_l: &DenseMatrix, s: usize) -> Result<SparseCodes> {
    if w_l.rows() != dictionary.dim() {
        return Err(Error::Shape(format!(
            "weights have {} rows, dictionary atoms have {}",
            w_l.rows(),
            dictionary.dim()
        )));
    }
    if s == 0 || s > dictionary.len() {
        return Err(Error::InvalidConfig(format!(
            "sparsity {s} must be in 1..={}",
            dictionary.len()
        )));
    }
    let encoder = OmpEncoder::new(&dictionary.atoms);
    let columns = encode_columns(&encoder, w_l, s);
    SparseCodes::from_columns(dictionary.len(), s, columns)
}

pub(crate) fn encode_columns(encoder: &OmpEncoder, w: &DenseMatrix, s: usize) -> Vec<SparseColumn> {
    (0..w.cols())
        .into_par_iter()
        .map(|j| encoder.encode(&w.col(j), s))
        .collect()
}
