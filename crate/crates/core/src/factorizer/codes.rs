use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// One sparse column: ascending atom indices with aligned nonzero values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseColumn {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    /// Sorts by atom index and drops exact zeros.
    pub fn normalized(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.retain(|&(_, v)| v != 0.0);
        pairs.sort_by_key(|&(i, _)| i);
        let (support, values) = pairs.into_iter().unzip();
        Self { support, values }
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    /// `D · s` for this column.
    pub fn reconstruct(&self, dictionary: &DenseMatrix) -> Vec<f64> {
        let mut out = vec![0.0; dictionary.rows()];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            for (r, o) in out.iter_mut().enumerate() {
                *o += v * dictionary[(r, i)];
            }
        }
        out
    }
}

/// Column-sparse coefficient matrix `S` (k × d2) in compressed-column form.
///
/// Every column holds at most `s` nonzeros with strictly increasing atom
/// indices; no stored value is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    k: usize,
    s: usize,
    col_ptr: Vec<usize>,
    atoms: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCodes {
    pub fn empty(k: usize, d2: usize, s: usize) -> Self {
        Self {
            k,
            s,
            col_ptr: vec![0; d2 + 1],
            atoms: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds codes from per-column data, validating every invariant.
    pub fn from_columns(k: usize, s: usize, columns: Vec<SparseColumn>) -> Result<Self> {
        let mut codes = Self::empty(k, 0, s);
        codes.col_ptr = Vec::with_capacity(columns.len() + 1);
        codes.col_ptr.push(0);
        for (j, col) in columns.into_iter().enumerate() {
            if col.support.len() != col.values.len() {
                return Err(Error::InvalidConfig(format!(
                    "column {j}: support and values differ in length"
                )));
            }
            if col.nnz() > s {
                return Err(Error::CorruptCodes {
                    column: j,
                    count: col.nnz(),
                    budget: s,
                });
            }
            if col.support.windows(2).any(|w| w[0] >= w[1]) || col.support.iter().any(|&i| i >= k) {
                return Err(Error::InvalidConfig(format!(
                    "column {j}: support must be strictly increasing and below {k}"
                )));
            }
            if col.values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "column {j}: stored values must be finite and nonzero"
                )));
            }
            codes.atoms.extend_from_slice(&col.support);
            codes.values.extend_from_slice(&col.values);
            codes.col_ptr.push(codes.atoms.len());
        }
        Ok(codes)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d2(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    pub fn nnz(&self) -> usize {
        self.atoms.len()
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.atoms[a..b], &self.values[a..b])
    }

    pub fn column_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn columns(&self) -> impl Iterator<Item = (&[usize], &[f64])> + '_ {
        (0..self.d2()).map(move |j| self.column(j))
    }

    pub fn to_sparse_columns(&self) -> Vec<SparseColumn> {
        self.columns()
            .map(|(a, v)| SparseColumn {
                support: a.to_vec(),
                values: v.to_vec(),
            })
            .collect()
    }

    /// All stored values in column-major, ascending-atom order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.k, self.d2());
        for j in 0..self.d2() {
            let (atoms, values) = self.column(j);
            for (&i, &v) in atoms.iter().zip(values) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Columns `[start, end)` as their own code matrix.
    pub fn slice_columns(&self, start: usize, end: usize) -> SparseCodes {
        let base = self.col_ptr[start];
        SparseCodes {
            k: self.k,
            s: self.s,
            col_ptr: self.col_ptr[start..=end].iter().map(|p| p - base).collect(),
            atoms: self.atoms[base..self.col_ptr[end]].to_vec(),
            values: self.values[base..self.col_ptr[end]].to_vec(),
        }
    }

    /// Replaces every stored value through `f`, dropping results that become zero.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> SparseCodes {
        let columns = self
            .columns()
            .map(|(a, v)| SparseColumn::normalized(a.iter().copied().zip(v.iter().map(|&x| f(x))).collect()))
            .collect();
        SparseCodes::from_columns(self.k, self.s, columns).expect("mapping preserves structure")
    }

    /// `D · S` as a dense matrix.
    pub fn reconstruct(&self, dictionary: &DenseMatrix) -> Result<DenseMatrix> {
        if dictionary.cols() != self.k {
            return Err(Error::Shape(format!(
                "dictionary has {} atoms, codes expect {}",
                dictionary.cols(),
                self.k
            )));
        }
        let d1 = dictionary.rows();
        let mut out = DenseMatrix::zeros(d1, self.d2());
        for j in 0..self.d2() {
            let (atoms, values) = self.column(j);
            for (&i, &v) in atoms.iter().zip(values) {
                for r in 0..d1 {
                    out[(r, j)] += v * dictionary[(r, i)];
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionarySpace {
    /// `D_L`, learned on whitened weights.
    Whitened,
    /// `D_a = L⁻¹ D_L`, applied directly to activations.
    Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub atoms: DenseMatrix,
    pub space: DictionarySpace,
}

impl Dictionary {
    pub fn new(atoms: DenseMatrix, space: DictionarySpace) -> Self {
        Self { atoms, space }
    }

    pub fn len(&self) -> usize {
        self.atoms.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.cols() == 0
    }

    pub fn dim(&self) -> usize {
        self.atoms.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_columns() {
        let ok = SparseCodes::from_columns(
            4,
            2,
            vec![
                SparseColumn::normalized(vec![(3, 1.0), (0, 2.0)]),
                SparseColumn::default(),
                SparseColumn::normalized(vec![(1, 0.0), (2, -1.0)]),
            ],
        )
        .unwrap();
        assert_eq!(ok.d2(), 3);
        assert_eq!(ok.nnz(), 3);
        assert_eq!(ok.column(0), (&[0usize, 3][..], &[2.0, 1.0][..]));
        assert_eq!(ok.column(2).0, &[2]);

        let too_many = SparseColumn::normalized(vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
        assert!(matches!(
            SparseCodes::from_columns(4, 2, vec![too_many]),
            Err(Error::CorruptCodes { column: 0, count: 3, budget: 2 })
        ));
        let out_of_range = SparseColumn {
            support: vec![4],
            values: vec![1.0],
        };
        assert!(SparseCodes::from_columns(4, 2, vec![out_of_range]).is_err());
        let zero = SparseColumn {
            support: vec![1],
            values: vec![0.0],
        };
        assert!(SparseCodes::from_columns(4, 2, vec![zero]).is_err());
    }

    #[test]
    fn slicing_and_dense_views() {
        let codes = SparseCodes::from_columns(
            3,
            1,
            vec![
                SparseColumn::normalized(vec![(0, 1.0)]),
                SparseColumn::normalized(vec![(2, 2.0)]),
                SparseColumn::normalized(vec![(1, 3.0)]),
            ],
        )
        .unwrap();
        let tail = codes.slice_columns(1, 3);
        assert_eq!(tail.d2(), 2);
        assert_eq!(tail.column(0), (&[2usize][..], &[2.0][..]));
        let dense = codes.to_dense();
        assert_eq!(dense[(2, 1)], 2.0);
        let d = DenseMatrix::identity(3);
        assert_eq!(codes.reconstruct(&d).unwrap(), dense);
    }
}
