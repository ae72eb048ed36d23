use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StudentT;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, random_orthonormal, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// `W = B₀C₀ + noise`, rank `r₀`.
    SharedSubspace,
    /// Each column drawn from one of `c` disjoint `r₀`-dimensional subspaces.
    UnionOfSubspaces,
    /// i.i.d. Student-t entries.
    HeavyTailed,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SharedSubspace => "shared_subspace",
            Self::UnionOfSubspaces => "union_of_subspaces",
            Self::HeavyTailed => "heavy_tailed",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared_subspace" => Ok(Self::SharedSubspace),
            "union_of_subspaces" => Ok(Self::UnionOfSubspaces),
            "heavy_tailed" => Ok(Self::HeavyTailed),
            other => Err(Error::InvalidConfig(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub d1: usize,
    pub d2: usize,
    /// Calibration rows.
    pub n: usize,
    /// Subspace dimension `r₀`.
    pub rank: usize,
    /// Number of subspaces `c` (union kind only).
    pub subspaces: usize,
    /// Noise standard deviation relative to the RMS entry of the clean weights.
    pub noise: f64,
    /// Condition number of the calibration matrix.
    pub cond: f64,
    /// Degrees of freedom of the heavy-tailed kind.
    pub dof: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, d1: usize, d2: usize, n: usize) -> Self {
        Self {
            kind,
            d1,
            d2,
            n,
            rank: 3,
            subspaces: 4,
            noise: 0.0,
            cond: 1.0,
            dof: 3.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d1 == 0 || self.d2 == 0 || self.n == 0 {
            return bad(format!("dimensions must be positive, got d1={} d2={} n={}", self.d1, self.d2, self.n));
        }
        if self.n < self.d1 {
            return bad(format!("need n >= d1 for a full-rank calibration, got n={} d1={}", self.n, self.d1));
        }
        if !(self.cond >= 1.0 && self.cond.is_finite()) {
            return bad(format!("condition number must be >= 1, got {}", self.cond));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        match self.kind {
            SynthKind::SharedSubspace if self.rank == 0 || self.rank > self.d1.min(self.d2) => {
                bad(format!("rank {} must lie in 1..={}", self.rank, self.d1.min(self.d2)))
            }
            SynthKind::UnionOfSubspaces
                if self.rank == 0 || self.subspaces == 0 || self.rank * self.subspaces > self.d1 =>
            {
                bad(format!(
                    "{} subspaces of dimension {} do not fit disjointly in {} dimensions",
                    self.subspaces, self.rank, self.d1
                ))
            }
            SynthKind::HeavyTailed if !(self.dof > 0.0 && self.dof.is_finite()) => {
                bad(format!("degrees of freedom must be positive, got {}", self.dof))
            }
            _ => Ok(()),
        }
    }
}

/// Returns `(W, X)`; `W` is d1×d2 and `X` is n×d1 with condition number `cond`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(DenseMatrix, DenseMatrix)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d1, d2) = (spec.d1, spec.d2);
    let clean = match spec.kind {
        SynthKind::SharedSubspace => {
            let b = gaussian_matrix(d1, spec.rank, &mut rng);
            let c = gaussian_matrix(spec.rank, d2, &mut rng);
            b.matmul(&c)?.scale(1.0 / (spec.rank as f64).sqrt())
        }
        SynthKind::UnionOfSubspaces => {
            let (c, r0) = (spec.subspaces, spec.rank);
            let basis = random_orthonormal(d1, c * r0, &mut rng);
            let mut w = DenseMatrix::zeros(d1, d2);
            for j in 0..d2 {
                let block = j % c;
                let coeffs: Vec<f64> = (0..r0).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                let col: Vec<f64> = (0..d1)
                    .map(|i| (0..r0).map(|t| basis[(i, block * r0 + t)] * coeffs[t]).sum())
                    .collect();
                w.set_col(j, &col);
            }
            w
        }
        SynthKind::HeavyTailed => {
            let dist = StudentT::new(spec.dof).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            DenseMatrix::from_fn(d1, d2, |_, _| rng.sample(dist))
        }
    };
    let w = if spec.noise > 0.0 {
        let rms = clean.frobenius_norm() / ((d1 * d2) as f64).sqrt();
        clean.add(&gaussian_matrix(d1, d2, &mut rng).scale(spec.noise * rms))?
    } else {
        clean
    };
    let x = conditioned_matrix(spec.n, d1, spec.cond, &mut rng)?;
    Ok((w, x))
}

/// `U·diag(σ)·Vᵀ` with σ log-spaced from 1 down to `1/cond`.
pub fn conditioned_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, cond: f64, rng: &mut R) -> Result<DenseMatrix> {
    let u = random_orthonormal(rows, cols, rng);
    let v = random_orthonormal(cols, cols, rng);
    let sigma: Vec<f64> = (0..cols)
        .map(|i| {
            if cols == 1 {
                1.0
            } else {
                cond.powf(-(i as f64) / (cols - 1) as f64)
            }
        })
        .collect();
    let us = DenseMatrix::from_fn(rows, cols, |r, c| u[(r, c)] * sigma[c]);
    us.matmul(&v.transpose())
}
